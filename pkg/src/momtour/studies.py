"""Higher-level studies: the measured quantities behind the verification
and acceptance experiments.

Each study is deterministic given its config and returns plain dicts and
lists that the CLI serializes to CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .complexity import LocalizedClass, fixed_point
from .core import minimizer_index
from .datagen import (
    ScenarioSpec,
    adversarial_two_point,
    build_instance,
    covariate_sampler,
    draw_sample,
    joint_residual_sampler,
)
from .experiments import (
    ExperimentConfig,
    ParamOverrides,
    build_experiment_instance,
    derive_params,
    erm_baseline,
    run_experiment,
    wilson_interval,
)
from .rng import derive_key, derive_rng
from .tournament import build_ledger, run_two_stage, winners
from .verification import ConditionParams, condition_diagnostics, essential_check


def home_games_study(config: ExperimentConfig, *, p1_variant: str = "order") -> dict:
    """Frequency of the true minimizer winning all its first-round home matches."""
    instance = build_experiment_instance(config)
    params = instance.params_order if p1_variant == "order" else instance.params_l2
    clip = config.overrides.clip if p1_variant == "l2" else None
    coeffs = instance.fclass.coefficient_matrix()
    star = minimizer_index(instance.oracle, coeffs)

    hits = 0
    for t in range(config.trials):
        sample = draw_sample(
            config.scenario,
            instance.n_per_segment,
            sample_seed=derive_key(config.seed, "trial", t),
            t0=instance.oracle.t0,
        )
        x1, _ = sample.segment(0)
        x2, y2 = sample.segment(1)
        t1 = instance.fclass.evaluation_table(x1)
        t2 = instance.fclass.evaluation_table(x2)
        if clip is not None:
            t1 = np.clip(t1, -clip, clip)
            t2 = np.clip(t2, -clip, clip)
            y2 = np.clip(y2, -clip, clip)
        ledger = build_ledger(t1, t2, y2, params)
        if star in winners(ledger, params):
            hits += 1
    freq = hits / config.trials
    lo, hi = wilson_interval(config.trials - hits, config.trials)
    return {
        "trials": config.trials,
        "hits": hits,
        "frequency": freq,
        "miss_ci_low": lo,
        "miss_ci_high": hi,
        "n_per_segment": instance.n_per_segment,
        "p1_variant": p1_variant,
        "clip": clip,
    }


@dataclass(frozen=True)
class AdversarialStudyConfig:
    gap: float = 1.0
    bias_scale: float = 0.26
    noise_sigma: float = 0.4
    epsilon: float = 0.15
    delta: float = 0.1
    n_per_segment: int = 4096
    erm_trials: int = 2000
    tournament_trials: int = 500
    seed: int = 20250810


def adversarial_study(cfg: AdversarialStudyConfig) -> dict:
    """ERM's wrong-endpoint frequency and the tournament's midpoint selection
    frequency on the two-point instance."""
    triplet, _, oracle = adversarial_two_point(
        cfg.gap, cfg.bias_scale, cfg.n_per_segment, cfg.seed, noise_sigma=cfg.noise_sigma
    )
    fclass = triplet.function_class
    wrong = 0
    for t in range(cfg.erm_trials):
        _, sample, _ = adversarial_two_point(
            cfg.gap,
            cfg.bias_scale,
            cfg.n_per_segment,
            cfg.seed,
            noise_sigma=cfg.noise_sigma,
            sample_seed=derive_key(cfg.seed, "erm-trial", t),
        )
        if erm_baseline(fclass, sample).hid == 1:
            wrong += 1

    spec_config = ExperimentConfig(
        scenario=ScenarioSpec.from_dict(
            {
                "covariates": {"family": "gaussian"},
                "dictionary": {"geometry": "two_point", "m": 2, "gap": cfg.gap},
                "target": {
                    "kind": "additive",
                    "t0": ("vector", (cfg.bias_scale / math.sqrt(cfg.n_per_segment),)),
                    "noise": {"family": "gaussian", "sigma": cfg.noise_sigma},
                },
                "seed": cfg.seed,
            }
        ),
        epsilon=cfg.epsilon,
        delta=cfg.delta,
        n_samples=cfg.n_per_segment,
        trials=cfg.tournament_trials,
        procedures=("tournament",),
        seed=cfg.seed,
    )
    params = derive_params(spec_config, cfg.n_per_segment)
    midpoint_hits = 0
    success_hits = 0
    closure_best = min(
        oracle.risk_many(np.array([[cfg.gap / 2], [0.0], [-cfg.gap / 2]]))
    )
    for t in range(cfg.tournament_trials):
        _, sample, _ = adversarial_two_point(
            cfg.gap,
            cfg.bias_scale,
            cfg.n_per_segment,
            cfg.seed,
            noise_sigma=cfg.noise_sigma,
            sample_seed=derive_key(cfg.seed, "tour-trial", t),
        )
        selected, _ = run_two_stage(fclass, sample, params)
        if selected.hid == (0, 1):
            midpoint_hits += 1
        excess = oracle.risk(selected.coefficients) - closure_best
        if excess <= cfg.epsilon:
            success_hits += 1
    return {
        "erm_trials": cfg.erm_trials,
        "erm_wrong": wrong,
        "erm_wrong_freq": wrong / cfg.erm_trials,
        "tournament_trials": cfg.tournament_trials,
        "midpoint_freq": midpoint_hits / cfg.tournament_trials,
        "success_freq": success_hits / cfg.tournament_trials,
        "bias": cfg.bias_scale / math.sqrt(cfg.n_per_segment),
    }


@dataclass(frozen=True)
class ComplexityScalingConfig:
    sizes: tuple[int, ...] = (4, 16, 64, 256)
    scale: float = 2.0
    noise_sigma: float = 1.0
    epsilon: float = 0.25
    kappa_level: float = 0.2
    trials: int = 160
    n_max: int = 1 << 18
    seed: int = 7

    @property
    def radius(self) -> float:
        return math.sqrt(2.0 * self.epsilon / 3.0)


def complexity_scaling_study(cfg: ComplexityScalingConfig) -> dict:
    """Fixed points of both localized complexities across dictionary sizes,
    with the fitted exponent of log(N_int + N_ext) against log log m."""
    rows = []
    for m in cfg.sizes:
        spec = ScenarioSpec.from_dict(
            {
                "covariates": {"family": "gaussian"},
                "dictionary": {"geometry": "orthogonal", "m": m, "scale": cfg.scale},
                "target": {
                    "kind": "additive",
                    "t0": ("member", 0),
                    "noise": {"family": "gaussian", "sigma": cfg.noise_sigma},
                },
                "seed": cfg.seed,
            }
        )
        triplet, oracle = build_instance(spec)
        coeffs = triplet.function_class.coefficient_matrix()
        star = minimizer_index(oracle, coeffs)
        loc = LocalizedClass.from_dictionary(oracle, coeffs, star, cfg.radius)
        res_int = fixed_point(
            "intrinsic",
            loc,
            cfg.kappa_level,
            (1, cfg.n_max),
            cfg.trials,
            derive_key(cfg.seed, "fp-int", m),
            covariate_sampler=covariate_sampler(spec),
        )
        res_ext = fixed_point(
            "multiplier",
            loc,
            cfg.kappa_level,
            (1, cfg.n_max),
            cfg.trials,
            derive_key(cfg.seed, "fp-ext", m),
            joint_sampler=joint_residual_sampler(spec, oracle, coeffs[star]),
        )
        if not (res_int.found and res_ext.found):
            raise RuntimeError(f"fixed point not found for m={m}")
        rows.append(
            {
                "m": m,
                "n_int": res_int.n_star,
                "n_ext": res_ext.n_star,
                "n_total": res_int.n_star + res_ext.n_star,
            }
        )
    x = np.log(np.log(np.array([row["m"] for row in rows], dtype=float)))
    y = np.log(np.array([row["n_total"] for row in rows], dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return {"rows": rows, "exponent": float(slope), "intercept": float(intercept)}


@dataclass(frozen=True)
class ConfidenceScalingConfig:
    block_counts: tuple[int, ...] = (5, 9, 15, 25)
    points_per_block: int = 32
    gap: float = 1.8
    noise_df: float = 2.5
    noise_scale: float = 1.0
    epsilon: float = 0.10
    theta3: float = 0.04  # far-branch threshold robust to order-statistic noise
    trials: int = 2000
    seed: int = 11


def confidence_scaling_config(cfg: ConfidenceScalingConfig, n_blocks: int) -> ExperimentConfig:
    """Experiment config for one point of the block-count sweep.

    Per-block size stays fixed while N = n * m scales with the block
    count, mirroring how both grow together as the confidence target
    tightens; varying n at literally fixed N would shrink the blocks and
    conflate block-count with block-quality effects.
    """
    scenario = ScenarioSpec.from_dict(
        {
            "covariates": {"family": "gaussian"},
            "dictionary": {"geometry": "two_point", "m": 2, "gap": cfg.gap},
            "target": {
                "kind": "additive",
                "t0": ("pair_midpoint", 0, 1, 0.0),
                "noise": {"family": "student_t", "df": cfg.noise_df, "scale": cfg.noise_scale},
            },
            "seed": cfg.seed,
        }
    )
    return ExperimentConfig(
        scenario=scenario,
        epsilon=cfg.epsilon,
        delta=0.1,  # nominal; the sweep drives n directly
        n_samples=n_blocks * cfg.points_per_block,
        trials=cfg.trials,
        procedures=("tournament",),
        seed=derive_key(cfg.seed, "confidence", n_blocks),
        overrides=ParamOverrides(n_blocks=n_blocks, theta3=cfg.theta3),
    )


def confidence_scaling_study(cfg: ConfidenceScalingConfig, workers: int = 1) -> dict:
    """Tournament failure frequency against the number of blocks."""
    rows = []
    for n_blocks in cfg.block_counts:
        config = replace(confidence_scaling_config(cfg, n_blocks), workers=workers)
        _, summary, meta = run_experiment(config)
        rows.append(
            {
                "n_blocks": n_blocks,
                "trials": cfg.trials,
                "failures": summary[0]["failures"],
                "failure_freq": summary[0]["failure_freq"],
                "n_per_segment": meta["n_per_segment"],
            }
        )
    floor = 1.0 / (2.0 * cfg.trials)  # zero-count clamp for the log fit
    x = np.array([row["n_blocks"] for row in rows], dtype=float)
    y = np.log(np.maximum([row["failure_freq"] for row in rows], floor))
    slope, _ = np.polyfit(x, y, 1)
    monotone = all(
        rows[i]["failure_freq"] >= rows[i + 1]["failure_freq"] for i in range(len(rows) - 1)
    )
    return {"rows": rows, "log_slope": float(slope), "monotone_nonincreasing": monotone}


def diagnostics_study(
    config: ExperimentConfig, cparams: ConditionParams, trials: int | None = None
) -> dict:
    """Per-trial condition diagnostics plus the essentialness implication.

    On every trial where all members pass conditions (1)-(3), the winners
    of the match stage run with the thresholds derived from the same
    constants must form an essential subset with the implied (rho, r').
    """
    instance = build_experiment_instance(config)
    params = replace(
        instance.params_order,
        theta2=cparams.theta2,
        theta3=cparams.theta3,
        theta4=cparams.theta4,
    )
    coeffs = instance.fclass.coefficient_matrix()
    star = minimizer_index(instance.oracle, coeffs)
    n_trials = trials if trials is not None else config.trials
    r = params.r

    all_pass = 0
    implication_checked = 0
    implication_ok = 0
    star_in_winners = 0
    for t in range(n_trials):
        sample = draw_sample(
            config.scenario,
            instance.n_per_segment,
            sample_seed=derive_key(config.seed, "diag-trial", t),
            t0=instance.oracle.t0,
        )
        x1, _ = sample.segment(0)
        x2, y2 = sample.segment(1)
        report = condition_diagnostics(
            coeffs, x1, x2, y2, cparams, r, instance.oracle, params,
            member_ids=instance.fclass.ids,
        )
        ledger = build_ledger(
            instance.fclass.evaluation_table(x1),
            instance.fclass.evaluation_table(x2),
            y2,
            params,
        )
        win_idx = winners(ledger, params)
        if star in win_idx:
            star_in_winners += 1
        if report.all_ok:
            all_pass += 1
            implication_checked += 1
            # the conditions imply h* wins everything and winners are essential
            if star in win_idx:
                local = int(np.flatnonzero(win_idx == star)[0])
                violations = essential_check(
                    coeffs[win_idx],
                    local,
                    cparams.rho,
                    cparams.r_prime(r),
                    instance.oracle,
                )
                if not violations:
                    implication_ok += 1
    return {
        "trials": n_trials,
        "all_conditions_pass": all_pass,
        "implication_checked": implication_checked,
        "implication_ok": implication_ok,
        "star_in_winners": star_in_winners,
        "achieved_rho": cparams.rho,
        "achieved_r_prime": cparams.r_prime(r),
    }
