import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from momtour.core import linear_class
from momtour.datagen import ScenarioSpec, generate
from momtour.rng import derive_rng
from momtour.tournament import (
    MatchLedger,
    TournamentParams,
    beats,
    block_bounds,
    block_sizes,
    block_stats,
    bounded_p1_distance,
    build_ledger,
    max_win_fallback,
    p1_distance,
    p1_matrix,
    run_two_stage,
    winners,
)


def make_params(**kw):
    defaults = dict(
        epsilon=0.25,
        delta=0.1,
        r2=1.0 / 6.0,
        ell=4,
        n_blocks=3,
        theta1=1.0,
        theta2=1.0,
        theta3=0.16,
        theta4=2.5,
        kappa1=2.5,
    )
    defaults.update(kw)
    return TournamentParams(**defaults)


def test_p1_distance_zero_for_identical():
    v = np.array([1.0, -2.0, 3.0])
    assert p1_distance(v, v, 2) == 0.0


def test_p1_distance_order_statistic():
    vh = np.zeros(5)
    vf = np.array([5.0, -1.0, 4.0, -2.0, 3.0])
    assert p1_distance(vh, vf, 1) == 5.0
    assert p1_distance(vh, vf, 2) == 4.0
    assert p1_distance(vh, vf, 5) == 1.0


def test_p1_distance_ell_out_of_range():
    v = np.zeros(4)
    with pytest.raises(ValueError):
        p1_distance(v, v, 0)
    with pytest.raises(ValueError):
        p1_distance(v, v, 5)


@given(
    hnp.arrays(np.float64, 8, elements=st.floats(-100, 100)),
    hnp.arrays(np.float64, 8, elements=st.floats(-100, 100)),
    st.integers(min_value=1, max_value=8),
)
@settings(max_examples=100, deadline=None)
def test_p1_symmetry_exact(vh, vf, ell):
    assert p1_distance(vh, vf, ell) == p1_distance(vf, vh, ell)


@given(
    hnp.arrays(np.float64, 8, elements=st.floats(-100, 100)),
    hnp.arrays(np.float64, 8, elements=st.floats(-100, 100)),
    st.integers(min_value=1, max_value=8),
    st.integers(min_value=-4, max_value=8),
)
@settings(max_examples=100, deadline=None)
def test_p1_scale_covariance_exact_for_binary_powers(vh, vf, ell, log2_lam):
    lam = 2.0**log2_lam
    assert p1_distance(lam * vh, lam * vf, ell) == lam * p1_distance(vh, vf, ell)


def test_bounded_p1():
    assert bounded_p1_distance(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0
    val = bounded_p1_distance(np.array([3.0, 4.0]), np.array([0.0, 0.0]))
    assert val == pytest.approx(math.sqrt(25.0 / 2.0))


def test_block_bounds_contiguous_extra_first():
    starts = block_bounds(10, 3)
    assert starts.tolist() == [0, 4, 7]
    assert block_sizes(10, 3).tolist() == [4, 3, 3]


def test_block_stats_zero_for_identical():
    rng = derive_rng(0, "bs")
    v = rng.standard_normal(12)
    y = rng.standard_normal(12)
    b, q, m = block_stats(v, v, y, block_bounds(12, 4))
    assert np.all(b == 0) and np.all(q == 0) and np.all(m == 0)


def test_block_stats_single_block_arithmetic():
    # residuals h: (1, 3), f: (2, 2)  ->  B = (1+9)/2 - (4+4)/2 = 1
    y = np.zeros(2)
    vh = np.array([1.0, 3.0])
    vf = np.array([2.0, 2.0])
    b, q, m = block_stats(vh, vf, y, block_bounds(2, 1))
    assert b[0] == pytest.approx(1.0)
    assert b[0] == pytest.approx(q[0] + m[0])


@given(
    st.integers(min_value=2, max_value=48),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=200, deadline=None)
def test_block_decomposition_identity(n, blocks, seed):
    blocks = min(blocks, n)
    rng = derive_rng(seed, "bqm")
    vh = rng.standard_normal(n) * 3
    vf = rng.standard_normal(n)
    y = rng.standard_normal(n) * 2
    b, q, m = block_stats(vh, vf, y, block_bounds(n, blocks))
    denom = np.maximum(np.abs(q) + np.abs(m), 1e-30)
    assert np.max(np.abs(b - (q + m)) / denom) < 1e-12


def _ledger_from_b(b_hf, p1_hf, params):
    """Two-member ledger with prescribed B_{h,f} blocks for the pair (h=0, f=1)."""
    n = params.n_blocks
    b = np.zeros((2, 2, n))
    b[0, 1, :] = b_hf
    b[1, 0, :] = -np.asarray(b_hf)
    p1 = np.array([[0.0, p1_hf], [p1_hf, 0.0]])
    zeros = np.zeros_like(b)
    wins = np.zeros((2, 2), dtype=bool)
    return MatchLedger(p1=p1, b=b, q=zeros, m=zeros, wins=wins)


def test_beats_reflexive():
    params = make_params()
    rng = derive_rng(1, "reflex")
    table = rng.standard_normal((3, 12))
    y = rng.standard_normal(12)
    ledger = build_ledger(table, table[:, :12], y, params)
    for i in range(3):
        assert beats(i, i, ledger, params)


def test_beats_majority_count():
    params = make_params(n_blocks=3, theta2=1.0, r2=1.0, theta4=10.0)
    # p1 below theta4 * r so the theta2-branch applies with threshold 1.0
    ledger = _ledger_from_b([-0.5, -2.0, 0.3], p1_hf=0.5, params=params)
    assert beats(1, 0, ledger, params)  # two of three blocks pass
    tight = make_params(n_blocks=3, theta2=0.1, r2=1.0, theta4=10.0)
    assert not beats(1, 0, ledger, tight)  # only one block passes


def test_winners_singleton_and_pairs():
    params = make_params()
    table = np.array([[0.0, 0.0, 0.0, 0.0]])
    y = np.zeros(4)
    ledger = build_ledger(table, table, y, params)
    assert winners(ledger, params).tolist() == [0]


def test_winners_matches_brute_force():
    params = make_params(n_blocks=5, ell=3)
    rng = derive_rng(9, "bf")
    spec_table = rng.standard_normal((8, 30))
    match_table = rng.standard_normal((8, 30))
    y = rng.standard_normal(30)
    ledger = build_ledger(spec_table, match_table, y, params)
    got = set(winners(ledger, params).tolist())
    brute = {
        f
        for f in range(8)
        if all(beats(f, h, ledger, params) for h in range(8))
    }
    assert got == brute


def test_max_win_fallback_smallest_index_first():
    wins = np.array([[True, False, True], [True, False, True], [False, False, True]])
    ledger = MatchLedger(
        p1=np.zeros((3, 3)),
        b=np.zeros((3, 3, 1)),
        q=np.zeros((3, 3, 1)),
        m=np.zeros((3, 3, 1)),
        wins=wins,
    )
    fb = max_win_fallback(ledger)
    assert fb.tolist() == [0, 1]


def _simple_instance(n_per_segment, seed=0, m=3, noise=0.5):
    spec = ScenarioSpec.from_dict(
        {
            "covariates": {"family": "gaussian"},
            "dictionary": {"geometry": "random_sphere", "m": m, "d": 3, "scale": 1.0},
            "target": {
                "kind": "additive",
                "t0": ("member", 0),
                "noise": {"family": "gaussian", "sigma": noise},
            },
            "seed": seed,
        }
    )
    return generate(spec, n_per_segment)


def test_run_two_stage_singleton():
    triplet, sample, _ = _simple_instance(40, m=1)
    params = make_params(ell=2)
    selected, trace = run_two_stage(triplet.function_class, sample, params)
    assert trace.f1_ids == [0]
    assert trace.f2_ids == [(0, 0)]
    assert selected.hid == (0, 0)
    assert np.array_equal(
        selected.coefficients, triplet.function_class.members[0].coefficients
    )


def test_run_two_stage_closure_size_and_containment():
    triplet, sample, _ = _simple_instance(60, seed=4, m=4, noise=0.1)
    params = TournamentParams.derive(0.25, 0.1, 60, kappa1=2.5)
    selected, trace = run_two_stage(triplet.function_class, sample, params)
    k = len(trace.f1_ids)
    assert set(trace.f1_ids) <= set(triplet.function_class.ids)
    assert len(trace.closure_ids) == k * (k + 1) // 2
    assert set(trace.f2_ids) <= set(trace.closure_ids)
    assert selected.hid in trace.f2_ids
    # the first-round winners' self-midpoints are candidates
    for hid in trace.f1_ids:
        assert (hid, hid) in trace.closure_ids


def test_run_two_stage_deterministic():
    triplet, sample, _ = _simple_instance(50, seed=8)
    params = TournamentParams.derive(0.25, 0.1, 50, kappa1=2.5)
    s1, t1 = run_two_stage(triplet.function_class, sample, params)
    s2, t2 = run_two_stage(triplet.function_class, sample, params)
    assert s1.hid == s2.hid
    assert np.array_equal(s1.coefficients, s2.coefficients)
    assert t1.f1_ids == t2.f1_ids and t1.f2_ids == t2.f2_ids
    assert np.array_equal(t1.stage1.ledger.b, t2.stage1.ledger.b)


def test_p1_bracket_monte_carlo():
    """Order-statistic estimate stays inside the two-sided bracket
    [1/(2 sqrt(10)), 3 kappa1] times the true distance, for unit-distance
    Gaussian functionals at ell = N / (5 kappa1^2)."""
    rng = derive_rng(123, "p1-bracket")
    n = 1000
    kappa1 = 2.5
    ell = max(1, int(n / (5 * kappa1**2)))
    lo, hi = 1.0 / (2.0 * math.sqrt(10.0)), 3.0 * kappa1
    inside = 0
    trials = 1000
    for _ in range(trials):
        diffs = rng.standard_normal(n)  # h - h* evaluations, L2 norm 1
        val = p1_distance(np.zeros(n), diffs, ell)
        inside += lo <= val <= hi
    assert inside >= 0.99 * trials


def test_bounded_p1_bracket_monte_carlo():
    rng = derive_rng(124, "l2-bracket")
    n = 200
    inside = 0
    trials = 1000
    for _ in range(trials):
        diffs = rng.standard_normal(n) * 1.7
        val = bounded_p1_distance(np.zeros(n), diffs)
        inside += 0.5 * 1.7 <= val <= 2.0 * 1.7
    assert inside >= 0.99 * trials


def test_p1_matrix_matches_pairwise_calls():
    rng = derive_rng(5, "p1m")
    table = rng.standard_normal((5, 17))
    params = make_params(ell=4)
    mat = p1_matrix(table, params)
    for i in range(5):
        for j in range(5):
            if i != j:
                assert mat[i, j] == p1_distance(table[i], table[j], 4)
    l2 = p1_matrix(table, make_params(p1_variant="l2"))
    for i in range(5):
        for j in range(5):
            assert l2[i, j] == pytest.approx(
                bounded_p1_distance(table[i], table[j]), abs=1e-12
            )


def test_ledger_decomposition_invariant():
    params = make_params(n_blocks=4, ell=5)
    rng = derive_rng(77, "ledger")
    t_p1 = rng.standard_normal((6, 24))
    t_match = rng.standard_normal((6, 24))
    y = rng.standard_normal(24)
    ledger = build_ledger(t_p1, t_match, y, params)
    denom = np.maximum(np.abs(ledger.q) + np.abs(ledger.m), 1e-30)
    assert np.max(np.abs(ledger.b - (ledger.q + ledger.m)) / denom) < 1e-12
    assert np.array_equal(ledger.p1, ledger.p1.T)
