"""Deterministic fuzz suites behind `momtour verify` and the acceptance gate.

The midpoint-theorem suite exercises the two-round population filter on
randomized linear instances and checks the 3 r^2 / 2 excess bound, both
for the maximal essential subset and for randomly thinned ones.  The
identity suite fuzzes the block decomposition and the exactness
properties of the order-statistic distance.
"""

from __future__ import annotations

import math

import numpy as np

from .core import PopulationOracle
from .rng import derive_rng
from .tournament import block_bounds, block_stats, p1_distance
from .verification import theorem41_oracle

THEOREM_RHO = 1.0 / 20.0


def random_instance(rng: np.random.Generator) -> tuple[np.ndarray, PopulationOracle, float]:
    """Random linear class, PSD covariance, target, and localization radius."""
    d = int(rng.integers(1, 9))
    m = int(rng.integers(2, 13))
    a = rng.standard_normal((d, d))
    cov = a @ a.T / d + 1e-6 * np.eye(d)
    t0 = rng.standard_normal(d)
    coeffs = t0[None, :] + rng.standard_normal((m, d)) * rng.uniform(0.2, 2.0)
    noise_var = float(rng.uniform(0.0, 2.0))
    r = float(np.exp(rng.uniform(math.log(0.05), math.log(2.0))))
    return coeffs, PopulationOracle(covariance=cov, t0=t0, noise_variance=noise_var), r


def theorem_suite(instances: int, seed: int) -> dict:
    """Randomized check of the deterministic two-round excess bound."""
    rng = derive_rng(seed, "theorem-suite")
    violations = 0
    max_ratio = 0.0
    for _ in range(instances):
        coeffs, oracle, r = random_instance(rng)
        bound = 1.5 * r * r
        for thin in (None, rng):
            res = theorem41_oracle(coeffs, THEOREM_RHO, r, oracle, thin_rng=thin)
            max_ratio = max(max_ratio, res.excess / bound if bound > 0 else 0.0)
            if not res.bound_ok:
                violations += 1
    return {"instances": instances, "violations": violations, "max_ratio": max_ratio}


def identity_fuzz_suite(cases: int, seed: int, rel_tol: float = 1e-12) -> dict:
    """Fuzz of B = Q + M per block and the distance estimator's exactness.

    Scale covariance is asserted for power-of-two factors, where float
    scaling is itself exact.
    """
    rng = derive_rng(seed, "identity-suite")
    max_rel = 0.0
    exact_ok = True
    for _ in range(cases):
        n = int(rng.integers(2, 65))
        blocks = int(rng.integers(1, min(8, n) + 1))
        vh = rng.standard_normal(n) * float(rng.uniform(0.1, 3.0))
        vf = rng.standard_normal(n) * float(rng.uniform(0.1, 3.0))
        y = rng.standard_normal(n) * float(rng.uniform(0.1, 3.0))
        starts = block_bounds(n, blocks)
        b, q, m = block_stats(vh, vf, y, starts)
        denom = np.maximum(np.abs(q) + np.abs(m), 1e-30)
        max_rel = max(max_rel, float(np.max(np.abs(b - (q + m)) / denom)))

        ell = int(rng.integers(1, n + 1))
        forward = p1_distance(vh, vf, ell)
        backward = p1_distance(vf, vh, ell)
        lam = float(2.0 ** rng.integers(-3, 11))
        scaled = p1_distance(lam * vh, lam * vf, ell)
        if forward != backward or scaled != lam * forward:
            exact_ok = False
    return {
        "cases": cases,
        "max_rel_error": max_rel,
        "exact_ok": exact_ok,
        "ok": max_rel <= rel_tol and exact_ok,
    }
