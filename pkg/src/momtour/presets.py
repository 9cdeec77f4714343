"""Calibrated study configurations shared by the acceptance suite, the
CLI defaults, and the scripts.

The heavy-tail comparison rides on a "straddled pair" dictionary: ten
random-sphere members with the target placed at the midpoint of the two
farthest members plus a small tilt.  The tilt puts the second member's
excess just above the accuracy target, so a mean-based selector confuses
the endpoints at a rate set by bias/noise alone, while both endpoints
sit a whole squared-gap above the best midpoint and are rejected by the
block majority with a large margin.  The scenario seed is search-
calibrated (see find_straddle_seed) so that no midpoint-closure
candidate has distance-to-target in the ambiguous band around sqrt(eps),
which keeps every bad candidate's rejection margin bounded away from 0.

All constants here are frozen calibration outputs; the emitted manifests
echo them.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .datagen import ScenarioSpec, build_instance
from .experiments import AutoSizeConstants, ExperimentConfig, ParamOverrides
from .studies import AdversarialStudyConfig, ComplexityScalingConfig, ConfidenceScalingConfig

EPSILON = 0.25
DELTA = 0.1

# straddle-instance calibration (see module docstring)
STRADDLE_M = 10
STRADDLE_D = 5
STRADDLE_SCALE = 3.0
STRADDLE_EXCESS = 0.35  # excess of the second endpoint, just above EPSILON
STRADDLE_BAND = (0.45, 1.75)  # forbidden distance-to-target band for closure members
STRADDLE_SEED = 542  # search-calibrated (find_straddle_seed)
HEAVY_TAIL_N_PER_SEGMENT = 640
HEAVY_TAIL_DF = 2.5
# The far-branch threshold theta3 * p1^2 is quadratic in the order-statistic
# estimate; at ell ~ N/(5 kappa1^2) that estimate carries ~1/sqrt(ell) relative
# noise, so the default theta3 = 1/kappa1^2 leaves band-edge candidates with a
# margin that sign-flips on noisy trials.  The tightened value tracks the
# theory's theta3 ~ 2 nu / alpha^2 with small nu and is recorded in manifests.
HEAVY_TAIL_THETA3 = 0.04
BOUNDED_CLIP = 6.0


def _straddle_scenario(seed: int, noise: dict) -> ScenarioSpec:
    base = ScenarioSpec.from_dict(
        {
            "covariates": {"family": "gaussian"},
            "dictionary": {
                "geometry": "random_sphere",
                "m": STRADDLE_M,
                "d": STRADDLE_D,
                "scale": STRADDLE_SCALE,
            },
            "target": {
                "kind": "additive",
                "t0": ("pair_midpoint", 0, 1, 0.0),
                "noise": noise,
            },
            "seed": seed,
        }
    )
    i, j, gap = _farthest_pair(base)
    tilt = STRADDLE_EXCESS / (2.0 * gap)
    return replace(
        base,
        target=replace(base.target, t0=("pair_midpoint", i, j, tilt)),
    )


def _farthest_pair(spec: ScenarioSpec) -> tuple[int, int, float]:
    triplet, oracle = build_instance(spec)
    coeffs = triplet.function_class.coefficient_matrix()
    m = coeffs.shape[0]
    best = (0, 1, -1.0)
    for a in range(m):
        for b in range(a + 1, m):
            gap = oracle.l2_norm(coeffs[a] - coeffs[b])
            if gap > best[2]:
                best = (a, b, gap)
    return best


def straddle_band_margin(spec: ScenarioSpec) -> tuple[float, float]:
    """Distances-to-target of closure candidates just below/above the band.

    Returns (max distance below band, min distance above band); a valid
    calibration has no candidate inside STRADDLE_BAND at all.
    """
    triplet, oracle = build_instance(spec)
    coeffs = triplet.function_class.coefficient_matrix()
    m = coeffs.shape[0]
    mids = np.stack(
        [0.5 * (coeffs[a] + coeffs[b]) for a in range(m) for b in range(a, m)]
    )
    dists = oracle.l2_norm_many(mids - oracle.t0[None, :])
    lo, hi = STRADDLE_BAND
    inside = (dists > lo) & (dists < hi)
    if np.any(inside):
        raise ValueError("straddle calibration violated: closure member in the band")
    below = dists[dists <= lo]
    above = dists[dists >= hi]
    return float(below.max() if below.size else 0.0), float(above.min())


def find_straddle_seed(start: int = 0, limit: int = 5000) -> int:
    """Smallest scenario seed whose straddle instance keeps the band empty."""
    for seed in range(start, start + limit):
        spec = _straddle_scenario(seed, {"family": "gaussian", "sigma": 1.0})
        try:
            straddle_band_margin(spec)
        except ValueError:
            continue
        return seed
    raise RuntimeError("no clean straddle seed in range")


def home_games_config(trials: int = 500, seed: int = 101, workers: int = 1) -> ExperimentConfig:
    """Criterion-3 style study: Gaussian noise, auto worst-case sample size."""
    scenario = _straddle_scenario(STRADDLE_SEED, {"family": "gaussian", "sigma": 1.0})
    return ExperimentConfig(
        scenario=scenario,
        epsilon=EPSILON,
        delta=DELTA,
        n_samples="auto",
        auto_mode="worst-case",
        trials=trials,
        procedures=("tournament",),
        seed=seed,
        workers=workers,
        auto_constants=AutoSizeConstants(),
        notes={"study": "home-games", "geometry": "straddled-pair sphere m=10 d=5"},
    )


def bounded_home_games_config(trials: int = 500, seed: int = 103, workers: int = 1) -> ExperimentConfig:
    """Criterion-9 style study: clipped evaluations and empirical-L2 distances."""
    cfg = home_games_config(trials=trials, seed=seed, workers=workers)
    return replace(
        cfg,
        procedures=("tournament-bounded-p1",),
        overrides=replace(cfg.overrides, clip=BOUNDED_CLIP),
        notes={"study": "home-games-bounded", "clip": BOUNDED_CLIP},
    )


def heavy_tail_config(trials: int = 500, seed: int = 211, workers: int = 1) -> ExperimentConfig:
    """Criterion-4 study: Student-t(2.5) noise, calibrated explicit N.

    Calibration targets: ERM failure >= 0.2 (endpoint confusion scales
    like excess * sqrt(N) / (gap * sigma)), tournament failure <= 0.1
    (every bad closure candidate keeps a rejection margin of at least
    (1 - theta3 * c_q^2) times its excess, bounded away from 0 by the
    band check).
    """
    scenario = _straddle_scenario(
        STRADDLE_SEED, {"family": "student_t", "df": HEAVY_TAIL_DF, "scale": 1.0}
    )
    return ExperimentConfig(
        scenario=scenario,
        epsilon=EPSILON,
        delta=DELTA,
        n_samples=HEAVY_TAIL_N_PER_SEGMENT,
        trials=trials,
        procedures=("tournament", "erm"),
        seed=seed,
        workers=workers,
        overrides=ParamOverrides(theta3=HEAVY_TAIL_THETA3),
        notes={
            "study": "heavy-tail-comparison",
            "calibration": {
                "straddle_seed": STRADDLE_SEED,
                "endpoint_excess": STRADDLE_EXCESS,
                "band": STRADDLE_BAND,
                "n_per_segment": HEAVY_TAIL_N_PER_SEGMENT,
                "theta3": HEAVY_TAIL_THETA3,
                "noise": {"family": "student_t", "df": HEAVY_TAIL_DF, "scale": 1.0},
            },
        },
    )


def adversarial_config() -> AdversarialStudyConfig:
    """Criterion-5 study constants (Example-1.1 instance)."""
    return AdversarialStudyConfig()


def confidence_config(trials: int = 2000) -> ConfidenceScalingConfig:
    """Criterion-7 study constants."""
    return ConfidenceScalingConfig(trials=trials)


def complexity_config() -> ComplexityScalingConfig:
    """Criterion-6 study constants."""
    return ComplexityScalingConfig()
