"""Experiment orchestration: seeded trial grids, baselines, and tidy outputs.

A run takes one scenario (one fixed learning problem), derives the
tournament tuning from the accuracy/confidence targets and the
scenario's estimated uniform-integrability constants, executes each
requested procedure on `trials` independent samples, and scores every
selection with the exact oracle.  Failure frequencies therefore estimate
the paper-style success probability directly, with no evaluation noise.

Outputs are two CSVs with a fixed column order plus a JSON manifest that
echoes the full configuration and the master seed.  For a fixed
(config, seed) the CSVs are byte-identical across reruns and worker
counts; volatile telemetry (wall time) lives only in the manifest.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .complexity import (
    LocalizedClass,
    fixed_point,
    kappa_estimate,
    l_t_estimate,
)
from .core import (
    FunctionClass,
    LabeledSample,
    PopulationOracle,
    closure_pairs,
    closure_table,
    id_sort_key,
)
from .datagen import (
    ScenarioSpec,
    build_instance,
    covariate_sampler,
    draw_sample,
    joint_residual_sampler,
)
from .rng import derive_key, derive_rng
from .tournament import TournamentParams, run_two_stage

PROCEDURES = ("tournament", "tournament-bounded-p1", "erm", "midpoint-oracle")

RECORD_COLUMNS = (
    "trial",
    "procedure",
    "selected_id",
    "excess",
    "success",
    "f1_size",
    "f2_size",
    "fallback",
    "wall_ms",
)

SUMMARY_COLUMNS = (
    "procedure",
    "trials",
    "failures",
    "failure_freq",
    "ci_low",
    "ci_high",
    "mean_excess",
    "median_excess",
    "fallback_count",
)


@dataclass(frozen=True)
class ParamOverrides:
    """Optional overrides of the derived tournament tuning constants."""

    theta1: float | None = None
    theta2: float | None = None
    theta3: float | None = None
    theta4: float | None = None
    ell_divisor: float | None = None
    ell: int | None = None
    c0: float | None = None
    n_blocks: int | None = None
    kappa1: float | None = None
    kappa_exponent_variant: int = 1  # kappa2 = kappa(xi2^v / 4)
    clip: float | None = None  # bounded framework truncation level

    def as_derive_kwargs(self) -> dict:
        out = {}
        for name in ("theta1", "theta2", "theta3", "theta4", "ell_divisor", "ell", "c0", "n_blocks"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        return out


@dataclass(frozen=True)
class AutoSizeConstants:
    worst_case_coefficient: float = 8.0  # multiplies (sigma^2/eps + 1)(log m + log(2/delta))
    log_term_coefficient: float = 1.0  # c2 multiplying (L_T^2 sigma^2/eps + 1) log(64/delta)
    kappa_level: float = 0.2
    trials: int = 128
    n_max: int = 1 << 20


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    epsilon: float
    delta: float
    n_samples: int | str = "auto"  # per-segment count, or "auto" (worst-case mode)
    auto_mode: str = "worst-case"  # worst-case | estimated
    trials: int = 100
    procedures: tuple[str, ...] = ("tournament",)
    seed: int = 0
    workers: int = 1
    overrides: ParamOverrides = field(default_factory=ParamOverrides)
    auto_constants: AutoSizeConstants = field(default_factory=AutoSizeConstants)
    notes: dict = field(default_factory=dict)  # calibration notes echoed to the manifest

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not (0 < self.epsilon < 1) or not (0 < self.delta < 1):
            raise ValueError("epsilon and delta must be in (0, 1)")
        unknown = set(self.procedures) - set(PROCEDURES)
        if unknown:
            raise ValueError(f"unknown procedures {sorted(unknown)}")
        object.__setattr__(self, "procedures", tuple(self.procedures))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["scenario"] = self.scenario.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data["scenario"] = ScenarioSpec.from_dict(data["scenario"])
        if "overrides" in data:
            data["overrides"] = ParamOverrides(**data["overrides"])
        if "auto_constants" in data:
            data["auto_constants"] = AutoSizeConstants(**data["auto_constants"])
        if "procedures" in data:
            data["procedures"] = tuple(data["procedures"])
        return cls(**data)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    procedure: str
    selected_id: object
    excess: float
    success: bool
    f1_size: int
    f2_size: int
    fallback: bool
    wall_ms: float

    def __post_init__(self):
        if self.excess < -1e-9:
            raise ValueError(f"negative excess risk {self.excess}")


def format_id(hid) -> str:
    if isinstance(hid, tuple):
        return "-".join(str(v) for v in hid)
    return str(hid)


def estimate_kappas(
    spec: ScenarioSpec,
    seed: int,
    *,
    xi1: float = 0.1,
    kappa_exponent_variant: int = 1,
    n_samples: int = 200_000,
    n_directions: int = 12,
) -> tuple[float, float]:
    """(kappa1, kappa2) over normalized class differences, by Monte Carlo.

    kappa1 = max(kappa(1/10), 1); kappa2 = kappa(xi2^v / 4) for
    xi2 = 1/kappa1^2 with the exponent v a config knob (the source
    states both v = 1 and v = 2).  Differences of midpoint-closure
    members of a linear class are again linear functionals, so a spread
    of dictionary difference directions covers the class the tournament
    actually runs on.
    """
    triplet, oracle = build_instance(spec)
    coeffs = triplet.function_class.coefficient_matrix()
    m = coeffs.shape[0]
    rng = derive_rng(seed, "kappa1")
    sampler = covariate_sampler(spec)
    X = sampler(rng, (n_samples,))
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    if len(pairs) > n_directions:
        idx = rng.choice(len(pairs), size=n_directions, replace=False)
        pairs = [pairs[i] for i in idx]
    draws = []
    for a, b in pairs:
        u = coeffs[a] - coeffs[b]
        norm = oracle.l2_norm(u)
        if norm > 1e-12:
            draws.append(X @ (u / norm))
    if not draws:
        return 1.0, 1.0
    kappa1 = max(1.0, max(kappa_estimate(w, xi1) for w in draws))
    xi2 = 1.0 / kappa1**2
    xi_second = min(0.999, xi2**kappa_exponent_variant / 4.0)
    kappa2 = max(1.0, max(kappa_estimate(w, xi_second) for w in draws))
    return kappa1, kappa2


def derive_params(
    config: ExperimentConfig, n_per_segment: int, *, p1_variant: str = "order"
) -> TournamentParams:
    ov = config.overrides
    if ov.kappa1 is not None:
        kappa1, kappa2 = ov.kappa1, float("nan")
    else:
        kappa1, kappa2 = estimate_kappas(
            config.scenario,
            config.seed,
            kappa_exponent_variant=ov.kappa_exponent_variant,
        )
    return TournamentParams.derive(
        config.epsilon,
        config.delta,
        n_per_segment,
        kappa1,
        kappa2,
        p1_variant=p1_variant,
        **ov.as_derive_kwargs(),
    )


def auto_sample_size(
    oracle: PopulationOracle,
    fclass: FunctionClass,
    epsilon: float,
    delta: float,
    constants: AutoSizeConstants = AutoSizeConstants(),
    *,
    mode: str = "worst-case",
    spec: ScenarioSpec | None = None,
    seed: int = 0,
    c0: float = 2.0 / 3.0,
) -> int:
    """Total labeled-pair budget 2 (N1 + N2) for the two stages.

    Worst-case mode uses the finite-dictionary form
    c * (sigma^2/eps + 1) * (log m + log(2/delta)) per stage, with the
    stage-two class size equal to the full midpoint closure.  Estimated
    mode replaces the worst case by Monte Carlo fixed points of the
    localized complexities plus the multiplier log term.
    """
    coeffs = fclass.coefficient_matrix()
    sigma_sq = float(np.min(oracle.risk_many(coeffs)))
    m1 = len(fclass)
    m2 = m1 * (m1 + 1) // 2

    if mode == "worst-case":
        base = constants.worst_case_coefficient * (sigma_sq / epsilon + 1.0)
        n1 = base * (math.log(m1) + math.log(2.0 / delta))
        n2 = base * (math.log(m2) + math.log(2.0 / delta))
        return math.ceil(2.0 * (n1 + n2))

    if mode != "estimated":
        raise ValueError("mode must be 'worst-case' or 'estimated'")
    if spec is None:
        raise ValueError("estimated mode needs the scenario spec for its samplers")

    r = math.sqrt(c0 * epsilon)
    star = int(np.argmin(oracle.risk_many(coeffs)))
    x_sampler = covariate_sampler(spec)
    j_sampler = joint_residual_sampler(spec, oracle, coeffs[star])

    log_term = constants.log_term_coefficient * (sigma_sq / epsilon + 1.0) * math.log(64.0 / delta)
    if sigma_sq > 0:
        lt = l_t_estimate(coeffs, oracle, j_sampler, 200_000, derive_key(seed, "auto-lt"))
        log_term = (
            constants.log_term_coefficient
            * (lt.value**2 * sigma_sq / epsilon + 1.0)
            * math.log(64.0 / delta)
        )

    totals = []
    for stage, stage_coeffs in enumerate((coeffs, closure_coeffs(coeffs))):
        star_k = int(np.argmin(oracle.risk_many(stage_coeffs)))
        loc = LocalizedClass.from_dictionary(oracle, stage_coeffs, star_k, r)
        parts = 0.0
        for kind, sampler_kw in (
            ("intrinsic", {"covariate_sampler": x_sampler}),
            ("multiplier", {"joint_sampler": j_sampler}),
        ):
            if kind == "multiplier" and sigma_sq == 0.0:
                continue
            res = fixed_point(
                kind,
                loc,
                constants.kappa_level,
                (1, constants.n_max),
                constants.trials,
                derive_key(seed, "auto-fp", stage, kind),
                **sampler_kw,
            )
            if not res.found:
                raise RuntimeError(f"fixed point ({kind}, stage {stage}) not found in range")
            parts += res.n_star
        totals.append(parts + log_term)
    return math.ceil(2.0 * sum(totals))


def closure_coeffs(coeffs: np.ndarray) -> np.ndarray:
    pairs = closure_pairs(coeffs.shape[0])
    return np.stack([0.5 * (coeffs[a] + coeffs[b]) for a, b in pairs])


def erm_baseline(fclass: FunctionClass, sample: LabeledSample):
    """Member minimizing the mean squared residual over the full sample."""
    if len(fclass) == 0:
        raise ValueError("empty class")
    table = fclass.evaluation_table(sample.covariates)
    resid = table - sample.responses[None, :]
    mse = np.mean(resid * resid, axis=1)
    best = np.min(mse)
    tied = [i for i in range(len(fclass)) if mse[i] <= best]
    idx = min(tied, key=lambda i: id_sort_key(fclass.members[i].hid))
    return fclass.members[idx]


@dataclass(frozen=True)
class _Instance:
    """Everything trial workers need, computed once per experiment."""

    config: ExperimentConfig
    fclass: FunctionClass
    oracle: PopulationOracle
    n_per_segment: int
    params_order: TournamentParams
    params_l2: TournamentParams
    class_best_risk: float
    closure_best_risk: float
    closure_risks: np.ndarray


def _score(instance: _Instance, hyp) -> float:
    risk = instance.oracle.risk(hyp.coefficients)
    ref = (
        instance.class_best_risk
        if not isinstance(hyp.hid, tuple)
        else instance.closure_best_risk
    )
    return risk - ref


def _run_trial(instance: _Instance, trial: int) -> list[TrialRecord]:
    cfg = instance.config
    sample = draw_sample(
        cfg.scenario,
        instance.n_per_segment,
        sample_seed=derive_key(cfg.seed, "trial", trial),
        t0=instance.oracle.t0,
    )
    records = []
    for proc in cfg.procedures:
        start = time.perf_counter()
        f1_size = f2_size = 0
        fallback = False
        if proc in ("tournament", "tournament-bounded-p1"):
            params = instance.params_order if proc == "tournament" else instance.params_l2
            clip = cfg.overrides.clip if proc == "tournament-bounded-p1" else None
            selected, trace = run_two_stage(instance.fclass, sample, params, clip=clip)
            f1_size, f2_size = len(trace.f1_ids), len(trace.f2_ids)
            fallback = trace.stage1.fallback or trace.stage2.fallback
            excess = instance.oracle.risk(selected.coefficients) - instance.closure_best_risk
            sel_id = selected.hid
        elif proc == "erm":
            selected = erm_baseline(instance.fclass, sample)
            excess = instance.oracle.risk(selected.coefficients) - instance.class_best_risk
            sel_id = selected.hid
        else:  # midpoint-oracle: exact best over the closure (reference baseline)
            pairs = closure_pairs(len(instance.fclass))
            best = int(np.argmin(instance.closure_risks))
            a, b = pairs[best]
            sel_id = (instance.fclass.members[a].hid, instance.fclass.members[b].hid)
            excess = float(instance.closure_risks[best]) - instance.closure_best_risk
        wall_ms = (time.perf_counter() - start) * 1000.0
        excess = float(excess)
        records.append(
            TrialRecord(
                trial=trial,
                procedure=proc,
                selected_id=sel_id,
                excess=excess,
                success=bool(excess <= cfg.epsilon),
                f1_size=f1_size,
                f2_size=f2_size,
                fallback=fallback,
                wall_ms=wall_ms,
            )
        )
    return records


_WORKER_INSTANCE: _Instance | None = None


def _worker_init(instance: _Instance) -> None:
    global _WORKER_INSTANCE
    _WORKER_INSTANCE = instance

def _worker_run(trial: int) -> list[TrialRecord]:
    return _run_trial(_WORKER_INSTANCE, trial)


def build_experiment_instance(config: ExperimentConfig) -> _Instance:
    triplet, oracle = build_instance(config.scenario)
    fclass = triplet.function_class
    if config.n_samples == "auto":
        total = auto_sample_size(
            oracle,
            fclass,
            config.epsilon,
            config.delta,
            config.auto_constants,
            mode=config.auto_mode,
            spec=config.scenario,
            seed=config.seed,
        )
        n_per_segment = max(1, math.ceil(total / 4.0))
    else:
        n_per_segment = int(config.n_samples)
    params_order = derive_params(config, n_per_segment, p1_variant="order")
    params_l2 = replace(params_order, p1_variant="l2")
    coeffs = fclass.coefficient_matrix()
    closure_risks = oracle.risk_many(closure_coeffs(coeffs))
    return _Instance(
        config=config,
        fclass=fclass,
        oracle=oracle,
        n_per_segment=n_per_segment,
        params_order=params_order,
        params_l2=params_l2,
        class_best_risk=float(np.min(oracle.risk_many(coeffs))),
        closure_best_risk=float(np.min(closure_risks)),
        closure_risks=closure_risks,
    )


def run_experiment(config: ExperimentConfig) -> tuple[list[TrialRecord], list[dict], dict]:
    """All trial records (sorted), per-procedure summary rows, and run metadata."""
    t_start = time.perf_counter()
    instance = build_experiment_instance(config)
    trials = list(range(config.trials))
    if config.workers > 1:
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_worker_init, initargs=(instance,)
        ) as pool:
            nested = list(pool.map(_worker_run, trials, chunksize=max(1, len(trials) // (4 * config.workers))))
    else:
        nested = [_run_trial(instance, t) for t in trials]
    records = [rec for group in nested for rec in group]
    records.sort(key=lambda rec: (rec.trial, rec.procedure))

    summary = []
    for proc in config.procedures:
        rows = [rec for rec in records if rec.procedure == proc]
        failures = sum(1 for rec in rows if not rec.success)
        freq = failures / len(rows)
        lo, hi = wilson_interval(failures, len(rows))
        excesses = np.array([rec.excess for rec in rows])
        summary.append(
            {
                "procedure": proc,
                "trials": len(rows),
                "failures": failures,
                "failure_freq": freq,
                "ci_low": lo,
                "ci_high": hi,
                "mean_excess": float(np.mean(excesses)),
                "median_excess": float(np.median(excesses)),
                "fallback_count": sum(1 for rec in rows if rec.fallback),
            }
        )
    meta = {
        "n_per_segment": instance.n_per_segment,
        "n_total": 4 * instance.n_per_segment,
        "params": asdict(instance.params_order),
        "timing": {"total_s": time.perf_counter() - t_start},
    }
    return records, summary, meta


def wilson_interval(failures: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = failures / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_results(
    records: list[TrialRecord],
    summary: list[dict],
    out_dir: str,
    config: ExperimentConfig,
    meta: dict | None = None,
) -> dict:
    """Write records.csv, summary.csv, and manifest.json; return the paths.

    The CSVs are byte-stable for a fixed (config, seed): rows are sorted,
    floats carry 17 significant digits, and the wall_ms column is a fixed
    0 placeholder (measured timings are volatile and therefore live in
    the manifest's timing block, outside the reproducibility contract).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    with open(paths["records"], "w", newline="") as fh:
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        for rec in records:
            row = (
                str(rec.trial),
                rec.procedure,
                format_id(rec.selected_id),
                _fmt(rec.excess),
                _fmt(rec.success),
                str(rec.f1_size),
                str(rec.f2_size),
                _fmt(rec.fallback),
                "0",
            )
            fh.write(",".join(row) + "\n")
    with open(paths["summary"], "w", newline="") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in summary:
            fh.write(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    manifest = {
        "config": config.to_dict(),
        "master_seed": config.seed,
        "code_version": __version__,
        "run": meta or {},
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
