"""Monte Carlo estimation of localized complexities and their fixed points.

The localized class around a center f* at radius r is a union of
segments [0, len_k * u_k] through the origin, one per class member, with
unit directions u_k and clamped lengths len_k = min(r, ||f_k - f*||).
Suprema of the symmetrized empirical process over such a set are
attained at the extreme points len_k * u_k, so the estimators only ever
evaluate the finitely many extreme points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import PopulationOracle
from .rng import derive_rng

CovariateSampler = Callable[[np.random.Generator, tuple], np.ndarray]
JointSampler = Callable[[np.random.Generator, tuple], tuple[np.ndarray, np.ndarray]]

_TRIAL_BATCH = 64


@dataclass(frozen=True)
class LocalizedClass:
    """Star-shaped localization of a finite dictionary around its minimizer."""

    directions: np.ndarray  # (k, d), unit population-L2 norm rows
    lengths: np.ndarray  # (k,), each in (0, r]
    radius: float
    center_id: object = None

    def __post_init__(self):
        U = np.asarray(self.directions, dtype=float)
        L = np.asarray(self.lengths, dtype=float)
        if U.ndim != 2 or L.shape != (U.shape[0],) or U.shape[0] == 0:
            raise ValueError("need a nonempty (k, d) direction matrix with k lengths")
        if np.any(L <= 0) or np.any(L > self.radius * (1 + 1e-12)):
            raise ValueError("segment lengths must lie in (0, r]")
        object.__setattr__(self, "directions", U)
        object.__setattr__(self, "lengths", L)

    @classmethod
    def from_dictionary(
        cls,
        oracle: PopulationOracle,
        coeffs: np.ndarray,
        center_index: int,
        radius: float,
        center_id: object = None,
    ) -> "LocalizedClass":
        if radius <= 0:
            raise ValueError("radius must be positive")
        C = np.asarray(coeffs, dtype=float)
        diffs = np.delete(C, center_index, axis=0) - C[center_index][None, :]
        norms = oracle.l2_norm_many(diffs)
        keep = norms > 1e-12
        if not np.any(keep):
            raise ValueError("all members coincide with the center")
        diffs, norms = diffs[keep], norms[keep]
        return cls(
            directions=diffs / norms[:, None],
            lengths=np.minimum(radius, norms),
            radius=radius,
            center_id=center_id,
        )


@dataclass(frozen=True)
class ComplexityEstimate:
    mean: float
    std_error: float
    trials: int
    n: int
    kind: str  # "intrinsic" | "multiplier"

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("need at least 2 trials for a standard error")

    @property
    def upper(self) -> float:
        """Conservative value used by fixed-point searches: mean + 2 SE."""
        return self.mean + 2.0 * self.std_error


def _sup_trials(
    localized: LocalizedClass,
    n: int,
    trials: int,
    seed: int,
    kind: str,
    covariate_sampler: CovariateSampler | None,
    joint_sampler: JointSampler | None,
) -> ComplexityEstimate:
    if trials < 2:
        raise ValueError("need at least 2 trials")
    rng = derive_rng(seed, "complexity", kind, n)
    U = localized.directions.T  # (d, k)
    sups = np.empty(trials, dtype=float)
    done = 0
    while done < trials:
        batch = min(_TRIAL_BATCH, trials - done)
        if kind == "intrinsic":
            X = covariate_sampler(rng, (batch, n))
            weights = rng.integers(0, 2, size=(batch, n)) * 2.0 - 1.0
        else:
            X, resid = joint_sampler(rng, (batch, n))
            eps = rng.integers(0, 2, size=(batch, n)) * 2.0 - 1.0
            weights = eps * resid
        G = X @ U  # (batch, n, k)
        s = np.einsum("tn,tnk->tk", weights, G) / n
        sups[done : done + batch] = np.max(localized.lengths[None, :] * np.abs(s), axis=1)
        done += batch
    mean = float(np.mean(sups))
    se = float(np.std(sups, ddof=1) / math.sqrt(trials))
    return ComplexityEstimate(mean=mean, std_error=se, trials=trials, n=n, kind=kind)


def rademacher_sup(
    localized: LocalizedClass,
    n: int,
    trials: int,
    seed: int,
    covariate_sampler: CovariateSampler,
) -> ComplexityEstimate:
    """E sup over the localized set of |(1/N) sum eps_i u(X_i)|, by Monte Carlo."""
    return _sup_trials(localized, n, trials, seed, "intrinsic", covariate_sampler, None)


def multiplier_sup(
    localized: LocalizedClass,
    n: int,
    trials: int,
    seed: int,
    joint_sampler: JointSampler,
) -> ComplexityEstimate:
    """As rademacher_sup with each summand weighted by the residual f*(X_i) - Y_i."""
    return _sup_trials(localized, n, trials, seed, "multiplier", None, joint_sampler)


@dataclass(frozen=True)
class FixedPointResult:
    found: bool
    n_star: int | None
    threshold: float
    estimate_at: ComplexityEstimate | None
    estimate_below: ComplexityEstimate | None  # at n_star - 1 when it exists
    kind: str


def fixed_point(
    kind: str,
    localized: LocalizedClass,
    kappa_level: float,
    n_range: tuple[int, int],
    trials: int,
    seed: int,
    *,
    covariate_sampler: CovariateSampler | None = None,
    joint_sampler: JointSampler | None = None,
) -> FixedPointResult:
    """Smallest N in range whose conservative estimate falls below the level.

    The threshold is kappa_level * r for the intrinsic kind and
    kappa_level * r^2 for the multiplier kind.  The search doubles from
    the lower end, then bisects, treating the estimate as approximately
    monotone in N; the returned bracket (n_star, n_star - 1) is evaluated
    explicitly so callers can verify it.
    """
    if kind not in ("intrinsic", "multiplier"):
        raise ValueError("kind must be 'intrinsic' or 'multiplier'")
    r = localized.radius
    threshold = kappa_level * (r if kind == "intrinsic" else r * r)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValueError("invalid search range")

    cache: dict[int, ComplexityEstimate] = {}

    def est(n: int) -> ComplexityEstimate:
        if n not in cache:
            cache[n] = _sup_trials(
                localized, n, trials, seed, kind, covariate_sampler, joint_sampler
            )
        return cache[n]

    if est(lo).upper <= threshold:
        return FixedPointResult(True, lo, threshold, est(lo), None, kind)

    # double until below threshold (or range exhausted)
    above, n = lo, lo
    while True:
        n = min(hi, max(n * 2, lo + 1))
        if est(n).upper <= threshold:
            below = n
            break
        above = n
        if n >= hi:
            return FixedPointResult(False, None, threshold, est(hi), None, kind)

    while below - above > 1:
        mid = (above + below) // 2
        if est(mid).upper <= threshold:
            below = mid
        else:
            above = mid
    return FixedPointResult(True, below, threshold, est(below), est(below - 1), kind)


KAPPA_GRID_RATIO = 1.01
KAPPA_GRID_MAX = 1e4


def kappa_estimate(w_samples: np.ndarray, xi: float) -> float:
    """Smallest grid truncation level kappa with at most xi of the second moment beyond it.

    Grid is geometric with ratio 1.01 on [1, 1e4]; the tail indicator uses
    |w| >= kappa * ||w||, with the empirical L2 norm of the samples.
    """
    if not 0 < xi < 1:
        raise ValueError("xi must be in (0, 1)")
    w = np.abs(np.asarray(w_samples, dtype=float).ravel())
    if w.size == 0:
        raise ValueError("empty sample")
    msq = float(np.mean(w * w))
    if msq <= 0:
        raise ValueError("degenerate sample (zero second moment)")
    norm = math.sqrt(msq)

    order = np.sort(w)
    suffix = np.concatenate((np.cumsum((order * order)[::-1])[::-1], [0.0]))
    n_grid = int(math.floor(math.log(KAPPA_GRID_MAX) / math.log(KAPPA_GRID_RATIO))) + 1
    grid = KAPPA_GRID_RATIO ** np.arange(n_grid + 1)
    grid[0] = 1.0
    idx = np.searchsorted(order, grid * norm, side="left")
    tails = suffix[idx] / w.size
    ok = np.flatnonzero(tails <= xi * msq)
    if ok.size == 0:
        raise ValueError("kappa grid exhausted: tails too heavy for the requested xi")
    return float(grid[ok[0]])


def gaussian_kappa(xi: float, tol: float = 1e-12) -> float:
    """Quadrature oracle: kappa(xi) for a standard Gaussian, from the exact tail
    second moment 2*(kappa*phi(kappa) + 1 - Phi(kappa))."""
    if not 0 < xi < 1:
        raise ValueError("xi must be in (0, 1)")

    def tail(k: float) -> float:
        phi = math.exp(-0.5 * k * k) / math.sqrt(2.0 * math.pi)
        upper = 0.5 * math.erfc(k / math.sqrt(2.0))
        return 2.0 * (k * phi + upper)

    lo, hi = 0.0, 1.0
    while tail(hi) > xi:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if tail(mid) > xi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LTEstimate:
    value: float
    std_error: float
    worst_id: object
    trials: int


def l_t_estimate(
    coeffs: np.ndarray,
    oracle: PopulationOracle,
    joint_sampler: JointSampler,
    n_samples: int,
    seed: int,
    member_ids: list | None = None,
) -> LTEstimate:
    """Worst normalized correlation between class differences and the residual.

    sup over f != f* of sqrt(E (f-f*)^2 (f*-Y)^2) / (||f-f*|| * sigma),
    estimated from n_samples joint draws; the reported standard error is
    the delta-method error of the attaining member's ratio.
    """
    C = np.asarray(coeffs, dtype=float)
    risks = oracle.risk_many(C)
    star = int(np.argmin(risks))
    sigma = math.sqrt(float(risks[star]))
    if sigma <= 0:
        raise ValueError("sigma is zero: residual is degenerate")
    diffs = np.delete(C, star, axis=0) - C[star][None, :]
    norms = oracle.l2_norm_many(diffs)
    keep = norms > 1e-12
    if not np.any(keep):
        raise ValueError("degenerate class: every member equals the minimizer")
    diffs, norms = diffs[keep], norms[keep]

    rng = derive_rng(seed, "l_t")
    X, resid = joint_sampler(rng, (n_samples,))
    G = X @ diffs.T  # (n, k)
    prod = (G * G) * (resid * resid)[:, None]
    means = prod.mean(axis=0)
    ses = prod.std(axis=0, ddof=1) / math.sqrt(n_samples)
    ratios = np.sqrt(means) / (norms * sigma)
    k = int(np.argmax(ratios))
    se_ratio = float(ses[k] / (2.0 * math.sqrt(means[k]) * norms[k] * sigma))

    ids = [i for i in range(C.shape[0]) if i != star]
    ids = [i for i, keep_i in zip(ids, keep) if keep_i]
    worst = member_ids[ids[k]] if member_ids is not None else ids[k]
    return LTEstimate(
        value=float(ratios[k]), std_error=se_ratio, worst_id=worst, trials=n_samples
    )
