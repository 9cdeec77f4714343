"""Seeded generators for covariates, dictionaries, and targets.

A scenario pins down a learning problem: the covariate family, a finite
linear dictionary, and the target (true coefficient plus noise family).
The dictionary and target are derived from the scenario seed alone, so a
scenario is one fixed triplet; samples come from per-segment streams
keyed by a separate sample seed, which is how experiment trials get
independent datasets for the same problem.

Supported regimes include the heavy-tailed ones: Student-t covariates
and Student-t noise with df > 2 (square integrable, nothing beyond), and
the adversarial two-point instance whose response is a noisy
1/sqrt(N)-perturbation of the midpoint of the two members.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import FunctionClass, LabeledSample, PopulationOracle, Triplet, linear_class
from .rng import derive_rng


@dataclass(frozen=True)
class CovariateSpec:
    family: str = "gaussian"  # gaussian | rademacher | student_t
    covariance: tuple | None = None  # row tuples; None = identity
    df: float | None = None  # student_t only, must be > 2

    def __post_init__(self):
        if self.family not in ("gaussian", "rademacher", "student_t"):
            raise ValueError(f"unknown covariate family {self.family!r}")
        if self.family == "student_t":
            if self.df is None or self.df <= 2:
                raise ValueError("student_t covariates need df > 2")
        if self.family == "rademacher" and self.covariance is not None:
            raise ValueError("rademacher coordinates have identity second moment only")
        if self.covariance is not None:
            object.__setattr__(
                self, "covariance", tuple(tuple(float(v) for v in row) for row in self.covariance)
            )


@dataclass(frozen=True)
class DictionarySpec:
    geometry: str  # orthogonal | random_sphere | clustered | two_point
    m: int = 2
    d: int | None = None
    scale: float = 1.0
    spread: float = 1.0
    gap: float = 1.0

    def __post_init__(self):
        if self.geometry not in ("orthogonal", "random_sphere", "clustered", "two_point"):
            raise ValueError(f"unknown dictionary geometry {self.geometry!r}")
        if self.geometry == "two_point" and self.m != 2:
            raise ValueError("two_point geometry has exactly 2 members")
        if self.m < 1:
            raise ValueError("need at least one member")

    @property
    def dim(self) -> int:
        if self.geometry == "orthogonal":
            return self.m
        if self.geometry == "two_point":
            return 1
        if self.d is None:
            raise ValueError(f"{self.geometry} geometry needs an explicit d")
        return self.d


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "none"  # none | gaussian | student_t
    sigma: float = 1.0  # gaussian scale
    df: float = 2.5  # student_t degrees of freedom, > 2
    scale: float = 1.0  # student_t scale

    def __post_init__(self):
        if self.family not in ("none", "gaussian", "student_t"):
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family == "student_t" and self.df <= 2:
            raise ValueError("student_t noise needs df > 2 (square-integrable)")

    @property
    def variance(self) -> float:
        if self.family == "none":
            return 0.0
        if self.family == "gaussian":
            return self.sigma**2
        return self.scale**2 * self.df / (self.df - 2.0)


@dataclass(frozen=True)
class TargetSpec:
    """True coefficient plus noise.

    kind "realizable": t0 is a class member, no noise.  kind "additive":
    Y = <t0, X> + W; t0 given as ("member", k), ("vector", (...,)), or
    ("pair_midpoint", i, j, tilt) which places t0 at the midpoint of
    members i and j plus tilt times the unit direction from j to i.
    """

    kind: str = "realizable"  # realizable | additive
    t0: tuple = ("member", 0)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.kind not in ("realizable", "additive"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "realizable" and self.noise.family != "none":
            raise ValueError("realizable targets carry no noise")
        if self.t0[0] not in ("member", "vector", "pair_midpoint"):
            raise ValueError(f"unknown t0 form {self.t0[0]!r}")
        if self.kind == "realizable" and self.t0[0] != "member":
            raise ValueError("realizable targets take t0 from the class")
        object.__setattr__(self, "t0", _freeze(self.t0))


def _freeze(obj):
    if isinstance(obj, (list, tuple)):
        return tuple(_freeze(v) for v in obj)
    return obj


@dataclass(frozen=True)
class ScenarioSpec:
    covariates: CovariateSpec
    dictionary: DictionarySpec
    target: TargetSpec
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        noise = NoiseSpec(**data["target"].get("noise", {}))
        target = {k: v for k, v in data["target"].items() if k != "noise"}
        if "t0" in target:
            target["t0"] = _freeze(target["t0"])
        return cls(
            covariates=CovariateSpec(**data["covariates"]),
            dictionary=DictionarySpec(**data["dictionary"]),
            target=TargetSpec(noise=noise, **target),
            seed=int(data.get("seed", 0)),
        )


def _covariance_matrix(spec: ScenarioSpec) -> np.ndarray:
    d = spec.dictionary.dim
    if spec.covariates.covariance is None:
        return np.eye(d)
    S = np.asarray(spec.covariates.covariance, dtype=float)
    if S.shape != (d, d):
        raise ValueError(f"covariance must be ({d}, {d})")
    return S


def _dictionary_coeffs(spec: ScenarioSpec) -> np.ndarray:
    g = spec.dictionary
    rng = derive_rng(spec.seed, "dictionary")
    d = g.dim
    if g.geometry == "orthogonal":
        return g.scale * np.eye(g.m)
    if g.geometry == "two_point":
        return np.array([[+g.gap / 2.0], [-g.gap / 2.0]])
    if g.geometry == "random_sphere":
        z = rng.standard_normal((g.m, d))
        return g.scale * z / np.linalg.norm(z, axis=1, keepdims=True)
    # clustered: members around a seeded unit-sphere center
    c = rng.standard_normal(d)
    c /= np.linalg.norm(c)
    return c[None, :] + g.spread * rng.standard_normal((g.m, d))


def _resolve_t0(spec: ScenarioSpec, coeffs: np.ndarray, sigma_x: np.ndarray) -> np.ndarray:
    form = spec.target.t0
    if form[0] == "member":
        return coeffs[int(form[1])].copy()
    if form[0] == "vector":
        t0 = np.asarray(form[1], dtype=float)
        if t0.shape != (coeffs.shape[1],):
            raise ValueError("explicit t0 has the wrong dimension")
        return t0
    _, i, j, tilt = form
    ti, tj = coeffs[int(i)], coeffs[int(j)]
    u = ti - tj
    norm = math.sqrt(max(u @ sigma_x @ u, 0.0))
    if norm <= 0:
        raise ValueError("pair_midpoint needs distinct members")
    return 0.5 * (ti + tj) + float(tilt) * u / norm


def covariate_sampler(spec: ScenarioSpec):
    """Callable (rng, leading_shape) -> array of shape leading_shape + (d,)."""
    S = _covariance_matrix(spec)
    d = S.shape[0]
    fam = spec.covariates.family
    if fam == "rademacher":

        def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
            return rng.integers(0, 2, size=tuple(shape) + (d,)).astype(float) * 2.0 - 1.0

        return sample

    L = np.linalg.cholesky(S + 1e-14 * np.eye(d))
    if fam == "gaussian":

        def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
            return rng.standard_normal(tuple(shape) + (d,)) @ L.T

        return sample

    df = float(spec.covariates.df)
    # scaled multivariate t with second moment exactly S
    adj = math.sqrt((df - 2.0) / df)

    def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
        z = rng.standard_normal(tuple(shape) + (d,)) @ L.T
        u = rng.chisquare(df, size=tuple(shape) + (1,))
        return adj * z * np.sqrt(df / u)

    return sample


def noise_sampler(spec: ScenarioSpec):
    """Callable (rng, shape) -> additive noise array of the given shape."""
    noise = spec.target.noise if spec.target.kind == "additive" else NoiseSpec()
    if noise.family == "none":

        def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
            return np.zeros(tuple(shape))

        return sample
    if noise.family == "gaussian":
        sigma = noise.sigma

        def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
            return sigma * rng.standard_normal(tuple(shape))

        return sample
    df, scale = noise.df, noise.scale

    def sample(rng: np.random.Generator, shape: tuple) -> np.ndarray:
        return scale * rng.standard_t(df, size=tuple(shape))

    return sample


def build_instance(spec: ScenarioSpec) -> tuple[Triplet, PopulationOracle]:
    """The fixed learning problem behind a scenario (no sample)."""
    S = _covariance_matrix(spec)
    coeffs = _dictionary_coeffs(spec)
    t0 = _resolve_t0(spec, coeffs, S)
    oracle = PopulationOracle(covariance=S, t0=t0, noise_variance=spec.target.noise.variance)
    fclass = linear_class(coeffs)
    triplet = Triplet(
        function_class=fclass,
        distribution=asdict(spec.covariates),
        target=asdict(spec.target),
    )
    return triplet, oracle


def draw_sample(
    spec: ScenarioSpec,
    n_per_segment: int,
    sample_seed: int | None = None,
    t0: np.ndarray | None = None,
) -> LabeledSample:
    """4 n_per_segment labeled points in four independent per-segment streams."""
    if n_per_segment < 1:
        raise ValueError("need at least one point per segment")
    if t0 is None:
        _, oracle = build_instance(spec)
        t0 = oracle.t0
    seed = spec.seed if sample_seed is None else sample_seed
    xs, ws = [], []
    x_sample = covariate_sampler(spec)
    w_sample = noise_sampler(spec)
    for k in range(4):
        rng = derive_rng(seed, "segment", k)
        xs.append(x_sample(rng, (n_per_segment,)))
        ws.append(w_sample(rng, (n_per_segment,)))
    X = np.concatenate(xs, axis=0)
    W = np.concatenate(ws, axis=0)
    return LabeledSample(covariates=X, responses=X @ t0 + W)


def generate(
    spec: ScenarioSpec, n_per_segment: int, sample_seed: int | None = None
) -> tuple[Triplet, LabeledSample, PopulationOracle]:
    """Class, 4N-point segmented sample, and exact oracle; deterministic per seed."""
    triplet, oracle = build_instance(spec)
    sample = draw_sample(spec, n_per_segment, sample_seed=sample_seed, t0=oracle.t0)
    return triplet, sample, oracle


def joint_residual_sampler(spec: ScenarioSpec, oracle: PopulationOracle, f_star_coeffs: np.ndarray):
    """Callable (rng, leading_shape) -> (X, f*(X) - Y) for complexity estimators."""
    x_sample = covariate_sampler(spec)
    w_sample = noise_sampler(spec)
    delta = np.asarray(f_star_coeffs, dtype=float) - oracle.t0

    def sample(rng: np.random.Generator, shape: tuple) -> tuple[np.ndarray, np.ndarray]:
        X = x_sample(rng, shape)
        W = w_sample(rng, shape)
        return X, X @ delta - W

    return sample


def adversarial_two_point(
    gap: float,
    bias_scale: float,
    n_per_segment: int,
    seed: int,
    *,
    noise_sigma: float = 1.0,
    sample_seed: int | None = None,
) -> tuple[Triplet, LabeledSample, PopulationOracle]:
    """The two-point instance: Y is a noisy bias_scale/sqrt(N)-perturbation
    of the midpoint, tilted toward the first member.

    With bias b = bias_scale / sqrt(N): class {+gap/2, -gap/2} on the
    line, t0 = b, so f* is the first member and the second member's
    excess is exactly 2 * gap * b.
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    b = bias_scale / math.sqrt(n_per_segment)
    spec = ScenarioSpec(
        covariates=CovariateSpec(family="gaussian"),
        dictionary=DictionarySpec(geometry="two_point", m=2, gap=gap),
        target=TargetSpec(
            kind="additive",
            t0=("vector", (b,)),
            noise=NoiseSpec(family="gaussian", sigma=noise_sigma),
        ),
        seed=seed,
    )
    return generate(spec, n_per_segment, sample_seed=sample_seed)
