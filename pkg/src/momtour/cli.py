"""Command-line interface.

Verbs:
  run          execute an experiment config (JSON) and emit CSVs + manifest
  complexity   fixed-point estimates of the localized complexities
  verify       deterministic fuzz suites (midpoint theorem, block identities)
  adversarial  the two-point study: ERM endpoint confusion vs the tournament
  diagnose     per-trial condition diagnostics and the essentialness implication

Common flags: --config PATH, --seed U64, --out DIR, --workers K.  The
worker count may also come from the MOMTOUR_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .experiments import ExperimentConfig, emit_results, run_experiment
from .presets import adversarial_config, complexity_config, heavy_tail_config
from .studies import adversarial_study, complexity_scaling_study, diagnostics_study
from .verification import ConditionParams
from .verify_suites import identity_fuzz_suite, theorem_suite


def _write_csv(path: str, columns: tuple[str, ...], rows: list[dict]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in columns) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _load_config(args) -> ExperimentConfig:
    with open(args.config) as fh:
        data = json.load(fh)
    config = ExperimentConfig.from_dict(data)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    return config


def cmd_run(args) -> int:
    config = _load_config(args)
    records, summary, meta = run_experiment(config)
    paths = emit_results(records, summary, args.out, config, meta)
    for row in summary:
        print(
            f"{row['procedure']}: failure_freq={row['failure_freq']:.4f} "
            f"ci=[{row['ci_low']:.4f}, {row['ci_high']:.4f}] "
            f"mean_excess={row['mean_excess']:.5f}"
        )
    print(f"wrote {paths['records']}")
    return 0


def cmd_complexity(args) -> int:
    cfg = complexity_config()
    if args.sizes:
        cfg = dataclasses.replace(cfg, sizes=tuple(int(v) for v in args.sizes.split(",")))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    result = complexity_scaling_study(cfg)
    _write_csv(
        os.path.join(args.out, "complexity.csv"),
        ("m", "n_int", "n_ext", "n_total"),
        result["rows"],
    )
    print(f"fitted log-m exponent: {result['exponent']:.3f}")
    return 0


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 2718
    theorem = theorem_suite(args.instances, seed)
    print(
        f"midpoint theorem suite: {theorem['instances']} instances, "
        f"{theorem['violations']} violations, max excess/bound "
        f"{theorem['max_ratio']:.6f}"
    )
    identities = identity_fuzz_suite(args.fuzz, seed)
    print(
        f"identity suite: {identities['cases']} cases, "
        f"max decomposition error {identities['max_rel_error']:.3e}, "
        f"p1 symmetry/scale exact: {identities['exact_ok']}"
    )
    ok = theorem["violations"] == 0 and identities["ok"]
    print("verify: PASS" if ok else "verify: FAIL")
    return 0 if ok else 1


def cmd_adversarial(args) -> int:
    cfg = adversarial_config()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = dataclasses.replace(
            cfg, erm_trials=args.trials, tournament_trials=max(1, args.trials // 4)
        )
    result = adversarial_study(cfg)
    _write_csv(
        os.path.join(args.out, "adversarial.csv"),
        tuple(result.keys()),
        [result],
    )
    print(
        f"erm wrong-endpoint freq: {result['erm_wrong_freq']:.4f}; "
        f"tournament midpoint freq: {result['midpoint_freq']:.4f}; "
        f"tournament success freq: {result['success_freq']:.4f}"
    )
    return 0


def cmd_diagnose(args) -> int:
    if args.config:
        config = _load_config(args)
    else:
        config = heavy_tail_config(trials=args.trials or 50)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    cparams = ConditionParams(alpha=0.9, beta=2.7, gamma=0.5, nu=0.02)
    result = diagnostics_study(config, cparams, trials=args.trials)
    _write_csv(
        os.path.join(args.out, "diagnostics.csv"), tuple(result.keys()), [result]
    )
    print(
        f"all-conditions pass: {result['all_conditions_pass']}/{result['trials']}; "
        f"implication ok: {result['implication_ok']}/{result['implication_checked']}; "
        f"achieved rho={result['achieved_rho']:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momtour", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default="results")
        p.add_argument(
            "--workers",
            type=int,
            default=int(os.environ.get("MOMTOUR_WORKERS", "0")) or None,
        )

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cx = sub.add_parser("complexity", help="fixed-point estimation")
    p_cx.add_argument("--sizes", type=str, default=None, help="comma-separated class sizes")
    common(p_cx)
    p_cx.set_defaults(func=cmd_complexity)

    p_vf = sub.add_parser("verify", help="deterministic fuzz suites")
    p_vf.add_argument("--instances", type=int, default=10_000)
    p_vf.add_argument("--fuzz", type=int, default=10_000)
    common(p_vf)
    p_vf.set_defaults(func=cmd_verify)

    p_ad = sub.add_parser("adversarial", help="two-point instance study")
    p_ad.add_argument("--trials", type=int, default=None)
    common(p_ad)
    p_ad.set_defaults(func=cmd_adversarial)

    p_dg = sub.add_parser("diagnose", help="condition diagnostics")
    p_dg.add_argument("--config", default=None)
    p_dg.add_argument("--trials", type=int, default=None)
    common(p_dg)
    p_dg.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
