"""Deterministic and statistical verifiers.

The deterministic side works entirely through the population oracle:
membership in an essential subset is a closed-form inequality on risks,
and the two-stage population filter is the idealized stand-in for the
match stage.  The statistical side checks, trial by trial, the three
conditions that make the match stage produce an essential subset, and
reports the essentialness constants they imply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PopulationOracle, closure_pairs, minimizer_index
from .tournament import TournamentParams, block_bounds, p1_matrix

DET_TOL = 1e-9  # absolute tolerance on deterministic inequalities


@dataclass(frozen=True)
class ConditionParams:
    """Constants of the two-sided distance estimate and block-level bounds.

    alpha < 1 < beta bracket the distance estimate; nu bounds the
    quadratic lower estimate and the multiplier oscillation on far
    members; gamma bounds the multiplier oscillation on near members;
    eta is the majority slack.
    """

    alpha: float
    beta: float
    gamma: float
    nu: float
    eta: float = 0.01

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if not (self.beta > 1):
            raise ValueError("beta must exceed 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not (0 < self.nu < 1):
            raise ValueError("nu must be in (0, 1)")
        if not (0 < self.eta < 0.5):
            raise ValueError("eta must be in (0, 1/2)")

    @property
    def theta2(self) -> float:
        return self.beta**2 / self.alpha**2 + self.gamma

    @property
    def theta3(self) -> float:
        return 2.0 * self.nu / self.alpha**2

    @property
    def theta4(self) -> float:
        return self.beta

    @property
    def rho(self) -> float:
        """Essentialness curvature constant implied by the conditions."""
        return 2.0 * self.nu * (1.0 + self.beta**2 / self.alpha**2)

    def r_prime(self, r: float) -> float:
        """Essentialness radius implied by the conditions."""
        return math.sqrt(2.0 * (self.gamma + self.beta**2 / self.alpha**2)) * r


@dataclass(frozen=True)
class EssentialViolation:
    member_id: object
    slack: float  # by how much the inequality fails


def essential_check(
    coeffs: np.ndarray,
    h_star_index: int,
    rho: float,
    r: float,
    oracle: PopulationOracle,
    member_ids: list | None = None,
) -> list[EssentialViolation]:
    """Violators of risk(h) <= risk(h*) + rho ||h - h*||^2 + r^2 (empty list = ok)."""
    C = np.asarray(coeffs, dtype=float)
    if not 0 <= h_star_index < C.shape[0]:
        raise ValueError("h_star missing from class")
    risks = oracle.risk_many(C)
    dists_sq = oracle.l2_norm_many(C - C[h_star_index][None, :]) ** 2
    bound = risks[h_star_index] + rho * dists_sq + r * r
    out = []
    for i in np.flatnonzero(risks > bound + DET_TOL):
        hid = member_ids[i] if member_ids is not None else int(i)
        out.append(EssentialViolation(member_id=hid, slack=float(risks[i] - bound[i])))
    return out


def p0_population_filter(
    coeffs: np.ndarray, rho: float, r: float, oracle: PopulationOracle
) -> np.ndarray:
    """Indices of the maximal (rho, r)-essential subset, via exact risks."""
    C = np.asarray(coeffs, dtype=float)
    star = minimizer_index(oracle, C)
    risks = oracle.risk_many(C)
    dists_sq = oracle.l2_norm_many(C - C[star][None, :]) ** 2
    keep = risks <= risks[star] + rho * dists_sq + r * r
    keep[star] = True
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class Theorem41Result:
    excess: float
    bound_ok: bool
    f1_size: int
    f2_size: int


def theorem41_oracle(
    coeffs: np.ndarray,
    rho: float,
    r: float,
    oracle: PopulationOracle,
    *,
    thin_rng: np.random.Generator | None = None,
) -> Theorem41Result:
    """Two rounds of the population filter with a midpoint closure in between.

    Checks that the final excess over the best class member is at most
    3 r^2 / 2.  With ``thin_rng`` given, each round's output is randomly
    thinned (keeping the round's minimizer), which is still an essential
    subset, so the bound must continue to hold.
    """
    if rho > 1.0 / 18.0:
        raise ValueError("requires rho <= 1/18")
    C = np.asarray(coeffs, dtype=float)

    def filter_and_thin(M: np.ndarray) -> np.ndarray:
        kept = p0_population_filter(M, rho, r, oracle)
        if thin_rng is not None and kept.size > 1:
            star_local = minimizer_index(oracle, M[kept])
            mask = thin_rng.random(kept.size) < 0.5
            mask[star_local] = True
            kept = kept[mask]
        return kept

    f1 = filter_and_thin(C)
    C1 = C[f1]
    pairs = closure_pairs(C1.shape[0])
    closure = np.stack([0.5 * (C1[a] + C1[b]) for a, b in pairs])
    f2 = filter_and_thin(closure)

    excess = float(np.max(oracle.risk_many(closure[f2])) - np.min(oracle.risk_many(C)))
    bound_ok = excess <= 1.5 * r * r + DET_TOL
    return Theorem41Result(
        excess=excess, bound_ok=bound_ok, f1_size=int(f1.size), f2_size=int(f2.size)
    )


@dataclass(frozen=True)
class MemberDiagnostics:
    member_id: object
    distance: float  # exact ||h - h*||
    p1: float
    cond1_ok: bool
    cond2_applies: bool
    cond2_count: int  # blocks passing both the Q lower bound and the M bound
    cond2_ok: bool
    cond3_applies: bool
    cond3_count: int
    cond3_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.cond1_ok and self.cond2_ok and self.cond3_ok


@dataclass(frozen=True)
class DiagnosticsReport:
    members: list[MemberDiagnostics]
    achieved_rho: float
    achieved_r_prime: float
    n_blocks: int

    @property
    def all_ok(self) -> bool:
        return all(m.all_ok for m in self.members)

    @property
    def failing_ids(self) -> list:
        return [m.member_id for m in self.members if not m.all_ok]


def condition_diagnostics(
    coeffs: np.ndarray,
    p1_covariates: np.ndarray,
    match_covariates: np.ndarray,
    match_responses: np.ndarray,
    cparams: ConditionParams,
    r: float,
    oracle: PopulationOracle,
    tparams: TournamentParams,
    member_ids: list | None = None,
) -> DiagnosticsReport:
    """Per-member check of the distance bracket and the block-level bounds.

    Condition 1: if p1(h, h*) >= beta r then p1/beta <= ||h-h*|| <= p1/alpha,
    else ||h-h*|| <= (beta/alpha) r.  Condition 2 (members with
    ||h-h*|| >= r): majority of blocks with Q >= (1-nu)||h-h*||^2 and
    M - EM >= -nu ||h-h*||^2.  Condition 3 (members with
    ||h-h*|| <= (beta/alpha) r): majority of blocks with |M - EM| <= gamma r^2.
    Exact distances and E M come from the oracle.
    """
    C = np.asarray(coeffs, dtype=float)
    star = minimizer_index(oracle, C)
    n = match_covariates.shape[0]
    starts = block_bounds(n, tparams.n_blocks)
    sizes = np.diff(np.concatenate((starts, [n])))

    p1_table = C @ np.asarray(p1_covariates, dtype=float).T
    p1 = p1_matrix(p1_table, tparams)[:, star]

    table = C @ np.asarray(match_covariates, dtype=float).T
    resid_star = table[star] - np.asarray(match_responses, dtype=float)
    diffs = C - C[star][None, :]
    dists = oracle.l2_norm_many(diffs)
    # E M = 2 E[(h - h*)(X) (h*(X) - Y)], closed form for independent additive noise
    em = 2.0 * diffs @ oracle.covariance @ (C[star] - oracle.t0)

    majority = tparams.n_blocks / 2.0
    rows = []
    for i in range(C.shape[0]):
        if i == star:
            continue
        dist = float(dists[i])
        if p1[i] >= cparams.beta * r:
            cond1 = (p1[i] / cparams.beta) <= dist <= (p1[i] / cparams.alpha)
        else:
            cond1 = dist <= (cparams.beta / cparams.alpha) * r

        d_eval = table[i] - table[star]
        q = np.add.reduceat(d_eval * d_eval, starts) / sizes
        m = 2.0 * np.add.reduceat(d_eval * resid_star, starts) / sizes
        dev = m - em[i]

        cond2_applies = dist >= r
        if cond2_applies:
            good = (q >= (1.0 - cparams.nu) * dist * dist) & (
                dev >= -cparams.nu * dist * dist
            )
            cond2_count = int(np.sum(good))
            cond2_ok = cond2_count > majority
        else:
            cond2_count, cond2_ok = 0, True

        cond3_applies = dist <= (cparams.beta / cparams.alpha) * r
        if cond3_applies:
            cond3_count = int(np.sum(np.abs(dev) <= cparams.gamma * r * r))
            cond3_ok = cond3_count > majority
        else:
            cond3_count, cond3_ok = 0, True

        hid = member_ids[i] if member_ids is not None else int(i)
        rows.append(
            MemberDiagnostics(
                member_id=hid,
                distance=dist,
                p1=float(p1[i]),
                cond1_ok=bool(cond1),
                cond2_applies=cond2_applies,
                cond2_count=cond2_count,
                cond2_ok=bool(cond2_ok),
                cond3_applies=cond3_applies,
                cond3_count=cond3_count,
                cond3_ok=bool(cond3_ok),
            )
        )
    return DiagnosticsReport(
        members=rows,
        achieved_rho=cparams.rho,
        achieved_r_prime=cparams.r_prime(r),
        n_blocks=tparams.n_blocks,
    )
