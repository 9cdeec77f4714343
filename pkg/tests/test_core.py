import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momtour.core import (
    FunctionClass,
    Hypothesis,
    LabeledSample,
    PopulationOracle,
    evaluate,
    linear_class,
    midpoint,
    population_minimizer,
    population_risk,
)
from momtour.rng import derive_rng


def test_evaluate_linear():
    h = Hypothesis(hid=0, coefficients=[1.0, 2.0])
    assert evaluate(h, [3.0, -1.0]) == 1.0


def test_evaluate_midpoint_of_linear_parents():
    f = Hypothesis(hid=0, coefficients=[0.0, 0.0])
    h = Hypothesis(hid=1, coefficients=[2.0, 4.0])
    mid = midpoint(f, h)
    assert np.allclose(mid.coefficients, [1.0, 2.0])
    assert evaluate(mid, [1.0, 1.0]) == 3.0
    assert mid.hid == (0, 1)


def test_evaluate_tabulated_lookup():
    h = Hypothesis(hid=3, values=[5.0, -1.0, 7.0])
    assert evaluate(h, 2) == 7.0


def test_evaluate_dimension_mismatch():
    h = Hypothesis(hid=0, coefficients=[1.0, 2.0])
    with pytest.raises(ValueError):
        evaluate(h, [1.0, 2.0, 3.0])


def test_self_midpoint_is_identity():
    f = Hypothesis(hid=4, coefficients=[1.5, -2.0])
    mid = midpoint(f, f)
    assert mid.hid == (4, 4)
    assert np.array_equal(mid.coefficients, f.coefficients)


@pytest.mark.parametrize("k", [1, 2, 5, 13, 31])
def test_midpoint_closure_cardinality(k):
    rng = derive_rng(7, "closure", k)
    cls = linear_class(rng.standard_normal((k, 3)))
    closure = cls.midpoint_closure()
    assert len(closure) == k * (k + 1) // 2
    assert len(set(closure.ids)) == len(closure)


def test_population_risk_at_t0_is_noise_variance():
    oracle = PopulationOracle(np.eye(3), np.array([1.0, 2.0, 3.0]), noise_variance=0.7)
    assert population_risk(oracle, oracle.t0) == pytest.approx(0.7)


def test_population_risk_identity_covariance():
    oracle = PopulationOracle(np.eye(2), np.zeros(2), noise_variance=1.0)
    assert population_risk(oracle, np.array([1.0, 0.0])) == pytest.approx(2.0)


def test_population_risk_matches_monte_carlo():
    # Monte Carlo oracle: sample (X, Y) and average the squared residual
    rng = derive_rng(11, "risk-mc")
    d = 4
    a = rng.standard_normal((d, d))
    cov = a @ a.T / d
    t0 = rng.standard_normal(d)
    t = rng.standard_normal(d)
    sigma_noise = 0.8
    oracle = PopulationOracle(cov, t0, noise_variance=sigma_noise**2)

    n = 1_000_000
    L = np.linalg.cholesky(cov + 1e-12 * np.eye(d))
    X = rng.standard_normal((n, d)) @ L.T
    Y = X @ t0 + sigma_noise * rng.standard_normal(n)
    sq = (X @ t - Y) ** 2
    mc_mean = sq.mean()
    mc_se = sq.std(ddof=1) / np.sqrt(n)
    assert abs(population_risk(oracle, t) - mc_mean) <= 3 * mc_se


def test_population_risk_matches_monte_carlo_many_instances():
    rng = derive_rng(12, "risk-mc-batch")
    n = 100_000
    for _ in range(20):
        d = int(rng.integers(1, 5))
        a = rng.standard_normal((d, d))
        cov = a @ a.T / d + 1e-9 * np.eye(d)
        t0 = rng.standard_normal(d)
        t = rng.standard_normal(d)
        oracle = PopulationOracle(cov, t0, noise_variance=float(rng.uniform(0, 2)))
        L = np.linalg.cholesky(cov + 1e-12 * np.eye(d))
        X = rng.standard_normal((n, d)) @ L.T
        Y = X @ t0 + np.sqrt(oracle.noise_variance) * rng.standard_normal(n)
        sq = (X @ t - Y) ** 2
        se = sq.std(ddof=1) / np.sqrt(n)
        assert abs(oracle.risk(t) - sq.mean()) <= 4 * se


def test_population_minimizer_singleton():
    cls = linear_class([[1.0, 1.0]])
    oracle = PopulationOracle(np.eye(2), np.zeros(2))
    assert population_minimizer(oracle, cls).hid == 0


def test_population_minimizer_prefers_t0():
    t0 = np.array([0.3, -0.2])
    cls = linear_class([t0, t0 + np.array([1.0, 0.0])])
    oracle = PopulationOracle(np.eye(2), t0, noise_variance=1.0)
    best = population_minimizer(oracle, cls)
    assert best.hid == 0
    assert oracle.risk(best.coefficients) == pytest.approx(1.0)


def test_population_minimizer_matches_exhaustive_scan():
    rng = derive_rng(3, "minimizer")
    for _ in range(10):
        coeffs = rng.standard_normal((10, 3))
        a = rng.standard_normal((3, 3))
        oracle = PopulationOracle(a @ a.T / 3, rng.standard_normal(3))
        cls = linear_class(coeffs)
        best = population_minimizer(oracle, cls)
        brute = min(range(10), key=lambda i: oracle.risk(coeffs[i]))
        assert best.hid == brute


def test_argmin_property():
    rng = derive_rng(5, "argmin")
    coeffs = rng.standard_normal((12, 4))
    oracle = PopulationOracle(np.eye(4), rng.standard_normal(4), noise_variance=0.5)
    cls = linear_class(coeffs)
    best = population_minimizer(oracle, cls)
    best_risk = oracle.risk(best.coefficients)
    assert np.all(oracle.risk_many(coeffs) - best_risk >= -1e-12)


def test_minimizer_tie_breaks_by_smallest_id():
    cls = linear_class([[1.0, 0.0], [0.0, 1.0]])
    oracle = PopulationOracle(np.eye(2), np.zeros(2))
    assert population_minimizer(oracle, cls).hid == 0


def test_labeled_sample_segments_partition():
    rng = derive_rng(1, "sample")
    X = rng.standard_normal((20, 2))
    y = rng.standard_normal(20)
    sample = LabeledSample(X, y)
    assert sample.segment_length == 5
    parts = [sample.segment(k) for k in range(4)]
    assert np.array_equal(np.concatenate([p[0] for p in parts]), X)
    assert np.array_equal(np.concatenate([p[1] for p in parts]), y)


def test_labeled_sample_rejects_non_divisible():
    with pytest.raises(ValueError):
        LabeledSample(np.zeros((10, 2)), np.zeros(10))


def test_oracle_rejects_non_psd():
    with pytest.raises(ValueError):
        PopulationOracle(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))


@given(st.integers(min_value=1, max_value=20), st.integers(min_value=0, max_value=10_000))
@settings(max_examples=30, deadline=None)
def test_closure_ids_are_canonical_pairs(k, seed):
    rng = derive_rng(seed, "closure-prop")
    cls = linear_class(rng.standard_normal((k, 2)))
    closure = cls.midpoint_closure()
    for hid in closure.ids:
        i, j = hid
        assert i <= j
    assert len(closure) == k * (k + 1) // 2
