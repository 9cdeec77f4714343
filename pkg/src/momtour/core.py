"""Domain types shared by all modules.

Hypotheses are either linear functionals over R^d or tabulated value
vectors indexed by sample position.  A finite class of hypotheses is
evaluated once per sample into an |H| x N table; everything downstream
(distance estimates, block statistics, tournaments) consumes tables, so
the rest of the package never needs to know how a hypothesis is
represented.

For linear classes with known covariate second-moment structure the
population risk is available in closed form through
:class:`PopulationOracle`, which is what the verification suites and the
experiment harness use to score selections exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HypothesisId = int | tuple[int, int]


def id_sort_key(hid: HypothesisId) -> tuple:
    """Total order over ids: plain indices before/within pair ids, lexicographic."""
    if isinstance(hid, tuple):
        return tuple(int(v) for v in hid)
    return (int(hid),)


@dataclass(frozen=True)
class Hypothesis:
    """A single evaluable hypothesis.

    Exactly one of ``coefficients`` (linear kind) and ``values``
    (tabulated kind, indexed by sample position) is set.
    """

    hid: HypothesisId
    coefficients: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.coefficients is None) == (self.values is None):
            raise ValueError("exactly one of coefficients/values must be given")
        if self.coefficients is not None:
            object.__setattr__(
                self, "coefficients", np.asarray(self.coefficients, dtype=float)
            )
        if self.values is not None:
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def kind(self) -> str:
        return "linear" if self.coefficients is not None else "tabulated"


def evaluate(h: Hypothesis, x) -> float:
    """Evaluate ``h`` at a covariate (linear) or sample position (tabulated)."""
    if h.kind == "linear":
        x = np.asarray(x, dtype=float)
        if x.shape != h.coefficients.shape:
            raise ValueError(
                f"dimension mismatch: coefficients {h.coefficients.shape}, covariate {x.shape}"
            )
        return float(np.dot(h.coefficients, x))
    return float(h.values[int(x)])


def midpoint(f: Hypothesis, h: Hypothesis) -> Hypothesis:
    """Midpoint hypothesis (f+h)/2 with the canonical pair id."""
    i, j = sorted((f.hid, h.hid), key=id_sort_key)
    hid = (i, j)
    if f.kind == "linear" and h.kind == "linear":
        return Hypothesis(hid=hid, coefficients=(f.coefficients + h.coefficients) / 2.0)
    if f.kind == "tabulated" and h.kind == "tabulated":
        return Hypothesis(hid=hid, values=(f.values + h.values) / 2.0)
    raise ValueError("cannot mix linear and tabulated parents")


@dataclass(frozen=True)
class FunctionClass:
    """An ordered finite set of hypotheses with unique ids."""

    members: tuple[Hypothesis, ...]
    provenance: str = "base"

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        ids = [m.hid for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be unique")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[HypothesisId]:
        return [m.hid for m in self.members]

    @property
    def all_linear(self) -> bool:
        return all(m.kind == "linear" for m in self.members)

    def coefficient_matrix(self) -> np.ndarray:
        if not self.all_linear:
            raise ValueError("coefficient matrix requires an all-linear class")
        return np.stack([m.coefficients for m in self.members])

    def evaluation_table(self, covariates: np.ndarray) -> np.ndarray:
        """|H| x N table of member evaluations on a sample."""
        if self.all_linear:
            X = np.asarray(covariates, dtype=float)
            return self.coefficient_matrix() @ X.T
        positions = np.asarray(covariates, dtype=int)
        return np.stack([m.values[positions] for m in self.members])

    def midpoint_closure(self) -> "FunctionClass":
        """All (f+h)/2 for members f, h; k members give k(k+1)/2 ids (i <= j)."""
        mids = []
        for a in range(len(self.members)):
            for b in range(a, len(self.members)):
                mids.append(midpoint(self.members[a], self.members[b]))
        return FunctionClass(tuple(mids), provenance=f"midpoint-closure-of({self.provenance})")


def closure_pairs(k: int) -> list[tuple[int, int]]:
    """Index pairs (a, b), a <= b, in the canonical closure order."""
    return [(a, b) for a in range(k) for b in range(a, k)]


def closure_table(table: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Midpoint-closure evaluation table built directly from a parent table."""
    pairs = closure_pairs(table.shape[0])
    out = np.empty((len(pairs), table.shape[1]), dtype=float)
    for row, (a, b) in enumerate(pairs):
        out[row] = 0.5 * (table[a] + table[b])
    return out, pairs


@dataclass(frozen=True)
class LabeledSample:
    """Paired covariate/response draws split into 4 disjoint equal segments.

    The two-stage procedure consumes the segments in order: distance
    estimation then matches for stage one, the same again for stage two.
    """

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("covariates must be (4N, d), responses (4N,)")
        if X.shape[0] % 4 != 0:
            raise ValueError("sample length must be divisible by 4")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "responses", y)

    @property
    def segment_length(self) -> int:
        return self.covariates.shape[0] // 4

    def segment(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Covariates and responses of segment k in {0,1,2,3}."""
        if not 0 <= k < 4:
            raise ValueError("segment index must be in 0..3")
        n = self.segment_length
        sl = slice(k * n, (k + 1) * n)
        return self.covariates[sl], self.responses[sl]


@dataclass(frozen=True)
class PopulationOracle:
    """Exact second-moment structure of a linear learning problem.

    risk(t) = (t - t0)' Sigma (t - t0) + noise_variance for independent
    additive noise, so risk(t0) = noise_variance and sigma^2 = risk(t*)
    for the class minimizer t*.
    """

    covariance: np.ndarray
    t0: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        S = np.asarray(self.covariance, dtype=float)
        t0 = np.asarray(self.t0, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or t0.shape != (S.shape[0],):
            raise ValueError("covariance must be (d, d) and t0 (d,)")
        if not np.allclose(S, S.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(S)) < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        object.__setattr__(self, "covariance", S)
        object.__setattr__(self, "t0", t0)

    @property
    def dim(self) -> int:
        return self.t0.shape[0]

    def risk(self, t: np.ndarray) -> float:
        d = np.asarray(t, dtype=float) - self.t0
        if d.shape != self.t0.shape:
            raise ValueError("dimension mismatch")
        return float(d @ self.covariance @ d) + self.noise_variance

    def risk_many(self, coeffs: np.ndarray) -> np.ndarray:
        D = np.asarray(coeffs, dtype=float) - self.t0[None, :]
        return np.einsum("ij,jk,ik->i", D, self.covariance, D) + self.noise_variance

    def l2_norm(self, t: np.ndarray) -> float:
        """Population L2 norm of the linear functional <t, .>."""
        t = np.asarray(t, dtype=float)
        return float(np.sqrt(max(t @ self.covariance @ t, 0.0)))

    def l2_norm_many(self, coeffs: np.ndarray) -> np.ndarray:
        C = np.asarray(coeffs, dtype=float)
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", C, self.covariance, C), 0.0))


@dataclass(frozen=True)
class Triplet:
    """A learning problem: class, covariate distribution spec, target spec.

    The specs are JSON-compatible dicts describing the generator and its
    parameters; the exact risk structure lives in the companion oracle.
    """

    function_class: FunctionClass
    distribution: dict
    target: dict


def population_risk(oracle: PopulationOracle, t: np.ndarray) -> float:
    return oracle.risk(t)


def population_minimizer(oracle: PopulationOracle, fclass: FunctionClass) -> Hypothesis:
    """Class member of minimal population risk; ties break by smallest id."""
    if len(fclass) == 0:
        raise ValueError("class is empty")
    if not fclass.all_linear:
        raise ValueError("population minimizer needs an all-linear class")
    risks = oracle.risk_many(fclass.coefficient_matrix())
    best = np.min(risks)
    tied = [i for i in range(len(fclass)) if risks[i] <= best]
    idx = min(tied, key=lambda i: id_sort_key(fclass.members[i].hid))
    return fclass.members[idx]


def minimizer_index(oracle: PopulationOracle, coeffs: np.ndarray) -> int:
    """Row index of the coefficient matrix with minimal risk (ties: first row)."""
    risks = oracle.risk_many(coeffs)
    return int(np.argmin(risks))


def linear_class(coeffs: Sequence[Sequence[float]], provenance: str = "base") -> FunctionClass:
    """Convenience constructor: one linear member per coefficient row, ids 0..m-1."""
    members = tuple(
        Hypothesis(hid=i, coefficients=np.asarray(c, dtype=float))
        for i, c in enumerate(coeffs)
    )
    return FunctionClass(members, provenance=provenance)
