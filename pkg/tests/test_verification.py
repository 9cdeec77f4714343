import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momtour.core import PopulationOracle, closure_pairs
from momtour.datagen import ScenarioSpec
from momtour.experiments import ExperimentConfig
from momtour.rng import derive_rng
from momtour.studies import diagnostics_study
from momtour.tournament import TournamentParams
from momtour.verification import (
    ConditionParams,
    condition_diagnostics,
    essential_check,
    p0_population_filter,
    theorem41_oracle,
)
from momtour.verify_suites import random_instance, theorem_suite


def test_condition_params_thresholds():
    cp = ConditionParams(alpha=0.5, beta=2.0, gamma=0.3, nu=0.1)
    assert cp.theta2 == pytest.approx(2.0**2 / 0.5**2 + 0.3)
    assert cp.theta3 == pytest.approx(2 * 0.1 / 0.25)
    assert cp.theta4 == 2.0
    assert cp.rho == pytest.approx(2 * 0.1 * (1 + 16.0))


def test_condition_params_validation():
    with pytest.raises(ValueError):
        ConditionParams(alpha=1.2, beta=2.0, gamma=0.3, nu=0.1)
    with pytest.raises(ValueError):
        ConditionParams(alpha=0.5, beta=0.9, gamma=0.3, nu=0.1)


def test_essential_check_singleton_ok():
    oracle = PopulationOracle(np.eye(2), np.zeros(2), noise_variance=1.0)
    coeffs = np.array([[0.1, 0.2]])
    assert essential_check(coeffs, 0, 0.05, 0.3, oracle) == []


def test_essential_check_constructed_violator_slack_one():
    # risk(h) = ||h||^2 with h* = t0 = 0; choose ||h||^2 = (r^2 + 1)/(1 - rho)
    rho, r = 0.05, 0.4
    norm_sq = (r * r + 1.0) / (1.0 - rho)
    oracle = PopulationOracle(np.eye(1), np.zeros(1))
    coeffs = np.array([[0.0], [np.sqrt(norm_sq)]])
    violations = essential_check(coeffs, 0, rho, r, oracle)
    assert len(violations) == 1
    assert violations[0].member_id == 1
    assert violations[0].slack == pytest.approx(1.0, abs=1e-9)


def test_essential_check_matches_brute_force():
    rng = derive_rng(1, "essential-bf")
    for _ in range(20):
        coeffs, oracle, r = random_instance(rng)
        star = int(np.argmin(oracle.risk_many(coeffs)))
        rho = 0.05
        got = {v.member_id for v in essential_check(coeffs, star, rho, r, oracle)}
        brute = set()
        for i in range(coeffs.shape[0]):
            d = coeffs[i] - coeffs[star]
            lhs = oracle.risk(coeffs[i])
            rhs = oracle.risk(coeffs[star]) + rho * (d @ oracle.covariance @ d) + r * r
            if lhs > rhs + 1e-9:
                brute.add(i)
        assert got == brute


def test_essential_check_missing_star():
    oracle = PopulationOracle(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError):
        essential_check(np.array([[1.0]]), 3, 0.05, 0.1, oracle)


def test_p0_filter_keeps_small_ball():
    oracle = PopulationOracle(np.eye(2), np.zeros(2))
    r = 0.5
    # members inside a ball of squared radius r^2: all pass with room to spare
    rng = derive_rng(2, "ball")
    coeffs = rng.standard_normal((8, 2))
    coeffs *= (r * 0.9) / np.linalg.norm(coeffs, axis=1, keepdims=True)
    coeffs[0] = 0.0
    kept = p0_population_filter(coeffs, 0.05, r, oracle)
    assert kept.tolist() == list(range(8))


def test_p0_filter_excludes_far_aligned_member():
    # far-side member: large distance, positively aligned inner product with
    # the residual direction makes the equivalent inequality fail
    t0 = np.array([0.0])
    oracle = PopulationOracle(np.eye(1), t0, noise_variance=1.0)
    coeffs = np.array([[0.1], [5.0]])
    kept = p0_population_filter(coeffs, 0.05, 0.3, oracle)
    assert kept.tolist() == [0]


def test_p0_filter_output_is_essential():
    rng = derive_rng(3, "p0-ess")
    for _ in range(25):
        coeffs, oracle, r = random_instance(rng)
        kept = p0_population_filter(coeffs, 0.05, r, oracle)
        sub = coeffs[kept]
        star = int(np.argmin(oracle.risk_many(sub)))
        assert essential_check(sub, star, 0.05, r, oracle) == []


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_p0_filter_always_contains_minimizer(seed):
    rng = derive_rng(seed, "p0-star")
    coeffs, oracle, r = random_instance(rng)
    star = int(np.argmin(oracle.risk_many(coeffs)))
    kept = p0_population_filter(coeffs, 0.05, r, oracle)
    assert star in kept


def test_theorem41_rejects_large_rho():
    oracle = PopulationOracle(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError):
        theorem41_oracle(np.array([[0.0]]), 0.2, 0.5, oracle)


def test_theorem41_convex_positioned_tight_bound():
    # t0 in the class: every essential member is within r^2/(1-rho) of optimal,
    # so the final excess is already at most (4 rho + 1) r^2
    rng = derive_rng(4, "convex")
    rho = 1.0 / 20.0
    for _ in range(50):
        d = int(rng.integers(1, 5))
        coeffs = rng.standard_normal((6, d))
        t0 = coeffs[int(rng.integers(0, 6))].copy()
        oracle = PopulationOracle(np.eye(d), t0, noise_variance=0.3)
        r = float(rng.uniform(0.1, 1.0))
        res = theorem41_oracle(coeffs, rho, r, oracle)
        assert res.excess <= (4 * rho + 1) * r * r + 1e-9


def test_theorem41_two_point_midpoint_wins():
    # members at +-2r, target offset delta = 0.1 r from the midpoint:
    # closed-form risks put both endpoints out of the second-round filter
    r = 0.5
    delta = 0.1 * r
    oracle = PopulationOracle(np.eye(1), np.array([delta]), noise_variance=1.0)
    coeffs = np.array([[2 * r], [-2 * r]])
    res = theorem41_oracle(coeffs, 1.0 / 20.0, r, oracle)
    assert res.bound_ok
    assert res.f1_size == 2
    assert res.f2_size == 1  # only the midpoint survives round two
    # and its excess over the best endpoint is negative
    assert res.excess == pytest.approx(delta**2 - (2 * r - delta) ** 2, abs=1e-12)


def test_theorem41_randomized_suite_small():
    res = theorem_suite(1000, seed=99)
    assert res["violations"] == 0
    assert res["max_ratio"] <= 1.0


def test_condition_diagnostics_zero_noise():
    rng = derive_rng(5, "diag0")
    coeffs = np.vstack([np.zeros(3), rng.standard_normal((4, 3))])
    oracle = PopulationOracle(np.eye(3), np.zeros(3), noise_variance=0.0)
    n = 120
    x1 = rng.standard_normal((n, 3))
    x2 = rng.standard_normal((n, 3))
    y2 = x2 @ oracle.t0
    params = TournamentParams.derive(0.25, 0.1, n, kappa1=2.5)
    cp = ConditionParams(alpha=0.9, beta=2.7, gamma=1e-9, nu=0.9)
    report = condition_diagnostics(coeffs, x1, x2, y2, cp, params.r, oracle, params)
    # realizable target: M vanishes identically, so condition (3) holds with
    # any gamma on every block it applies to
    for row in report.members:
        if row.cond3_applies:
            assert row.cond3_count == params.n_blocks
    assert len(report.members) == 4  # h* itself is excluded


def test_condition_diagnostics_branch_selection():
    rng = derive_rng(6, "diag-branch")
    r = 0.5
    coeffs = np.array([[0.0, 0.0], [0.2, 0.0], [3.0, 0.0]])
    oracle = PopulationOracle(np.eye(2), np.zeros(2), noise_variance=0.5)
    n = 200
    x1 = rng.standard_normal((n, 2))
    x2 = rng.standard_normal((n, 2))
    y2 = x2 @ oracle.t0 + np.sqrt(0.5) * rng.standard_normal(n)
    params = TournamentParams.derive(0.375, 0.1, n, kappa1=2.5)
    cp = ConditionParams(alpha=0.9, beta=2.7, gamma=1.0, nu=0.25)
    report = condition_diagnostics(coeffs, x1, x2, y2, cp, r, oracle, params)
    near = next(m for m in report.members if m.member_id == 1)
    far = next(m for m in report.members if m.member_id == 2)
    assert not near.cond2_applies  # distance 0.2 < r
    assert far.cond2_applies
    assert not far.cond3_applies  # distance 3 > (beta/alpha) r


def test_diagnostics_implication_on_seeded_trials():
    """Whenever all members pass conditions (1)-(3), the winners of the match
    stage run with the derived thresholds are an essential subset with the
    implied (rho, r')."""
    scenario = ScenarioSpec.from_dict(
        {
            "covariates": {"family": "gaussian"},
            "dictionary": {"geometry": "random_sphere", "m": 6, "d": 4, "scale": 1.2},
            "target": {
                "kind": "additive",
                "t0": ("member", 0),
                "noise": {"family": "gaussian", "sigma": 0.4},
            },
            "seed": 31,
        }
    )
    config = ExperimentConfig(
        scenario=scenario,
        epsilon=0.3,
        delta=0.1,
        n_samples=600,
        trials=200,
        procedures=("tournament",),
        seed=77,
    )
    cp = ConditionParams(alpha=0.9, beta=2.8, gamma=0.6, nu=0.03)
    out = diagnostics_study(config, cp, trials=200)
    assert out["all_conditions_pass"] > 0
    assert out["implication_ok"] == out["implication_checked"]
