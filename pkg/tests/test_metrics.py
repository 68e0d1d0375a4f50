import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import array_world, degraded_regime, random_config, random_world
from sysfair.errors import DisjointSupportError, InapplicableConstructionError, UnsupportedPolicyError
from sysfair.metrics import (decompose_gap, der, retrieval_quality, shared_space, theorem1_bound,
                             theorem2_check, weight_grid)
from sysfair.pipeline import RetrievalPolicy, retrieve, serve
from sysfair.worldgen import generate_world


def der_loop(mu):
    """Textbook form, written out independently."""
    total = sum(mu)
    k = len(mu)
    return 1 - k / (k - 1) * sum((m / total - 1 / k) ** 2 for m in mu)


@pytest.mark.parametrize("mu,expected", [((1, 1), 1.0), ((1, 0), 0.0), ((3, 1), 0.75)])
def test_der_examples(mu, expected):
    assert abs(der(mu) - expected) <= 1e-12


def test_der_all_zero_is_equal():
    assert der((0.0, 0.0, 0.0)) == 1.0


def test_der_rejects_negative():
    with pytest.raises(ValueError):
        der((1.0, -0.5))


def test_der_invariances_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        mu = rng.random(k) + 0.01
        d = der(mu)
        assert 0.0 <= d <= 1.0
        assert abs(der(mu * rng.uniform(0.01, 100)) - d) <= 1e-12
        assert abs(der(rng.permutation(mu)) - d) <= 1e-12
        assert abs(der_loop(list(mu)) - d) <= 1e-12


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(0, 1e6)))
def test_der_range_and_equality(mu):
    d = der(mu)
    assert -1e-12 <= d <= 1 + 1e-12
    if mu.sum() > 0 and np.all(mu == mu[0]):
        assert d == pytest.approx(1.0, abs=1e-12)
    if mu.sum() > 0 and np.ptp(mu / mu.sum()) > 1e-3:
        assert d < 1.0


@pytest.mark.parametrize("p1,p0,expected", [
    ((0.5, 0.5), (0.5, 0.5), (0.5, 0.5)),
    ((0.8, 0.2), (0.2, 0.8), (0.5, 0.5)),
    ((0.9, 0.1), (0.5, 0.5), (0.45 / 1.4 / (0.45 / 1.4 + 0.05 / 0.6), 0.05 / 0.6 / (0.45 / 1.4 + 0.05 / 0.6))),
])
def test_shared_space_examples(p1, p0, expected):
    assert np.allclose(shared_space(p1, p0).weights, expected, atol=1e-12)


def test_shared_space_numeric_value():
    assert np.allclose(shared_space((0.9, 0.1), (0.5, 0.5)).weights, (0.794, 0.206), atol=1e-3)


def test_shared_space_disjoint():
    with pytest.raises(DisjointSupportError):
        shared_space((1.0, 0.0), (0.0, 1.0))


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_shared_space_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    assert np.allclose(shared_space(a, b).weights, shared_space(b, a).weights, atol=1e-15)
    assert np.allclose(shared_space(a, a).weights, a, atol=1e-12)


def brute_force_terms(world, policy, alpha):
    """Loop-by-loop evaluation of the three shift/preference terms."""
    cd = world.context_dist
    X = world.shape[0]
    w = [cd[1][x] * cd[0][x] / (cd[1][x] + cd[0][x]) if cd[1][x] + cd[0][x] > 0 else 0.0 for x in range(X)]
    s = [v / sum(w) for v in w]
    util = {0: [], 1: []}
    for x in range(X):
        j = serve(world, x, retrieve(policy, world, x), alpha)
        for g in (0, 1):
            util[g].append(sum(world.true_prefs[g][k] * world.outcome_probs[x, j, k] for k in range(world.shape[2])))
    e = lambda dist, u: sum(dist[x] * u[x] for x in range(X))  # noqa: E731
    t5 = e(cd[1], util[1]) - e(s, util[1])
    t6 = e(s, util[1]) - e(s, util[0])
    t7 = e(s, util[0]) - e(cd[0], util[0])
    return t5, t6, t7, e(cd[1], util[1]) - e(cd[0], util[0])


def test_decomposition_matches_brute_force_three_contexts():
    rng = np.random.default_rng(12)
    cfg = random_config(rng, n_contexts=3, n_items=7, context_dist=[(0.6, 0.3, 0.1), (0.1, 0.2, 0.7)])
    w = generate_world(cfg)
    pol = RetrievalPolicy.oracle_top_m(3)
    alpha = (0.3, 0.8)
    got = decompose_gap(w, pol, alpha)
    oracle = brute_force_terms(w, pol, alpha)
    for a, b in zip((got.term_x_shift_1, got.term_preference, got.term_x_shift_2, got.total_gap), oracle):
        assert abs(a - b) <= 1e-10


def test_decomposition_symmetric_world_is_zero():
    rng = np.random.default_rng(3)
    cd = tuple(rng.dirichlet(np.ones(4)))
    w = random_world(rng, n_contexts=4, context_dist=[cd, cd], prefs=[(0.4, 0.7), (0.4, 0.7)])
    d = decompose_gap(w, RetrievalPolicy.oracle_top_m(5), (0.5, 0.5))
    assert d.to_dict() == {"term_x_shift_1": 0.0, "term_preference": 0.0, "term_x_shift_2": 0.0, "total_gap": 0.0}


def test_decomposition_same_contexts_different_preferences():
    rng = np.random.default_rng(4)
    cd = tuple(rng.dirichlet(np.ones(4)))
    w = random_world(rng, n_contexts=4, context_dist=[cd, cd], prefs=[(0.9, 0.1), (0.2, 0.8)])
    d = decompose_gap(w, RetrievalPolicy.oracle_top_m(5), (0.5, 0.5))
    assert abs(d.term_x_shift_1) <= 1e-15 and abs(d.term_x_shift_2) <= 1e-15
    assert d.term_preference == pytest.approx(d.total_gap, abs=1e-15)


def test_decomposition_rejects_random_policy():
    w = random_world(np.random.default_rng(0))
    with pytest.raises(UnsupportedPolicyError):
        decompose_gap(w, RetrievalPolicy.random(3), (1, 1))


def test_bound_vanishes_at_shared_truth():
    rng = np.random.default_rng(5)
    w = random_world(rng, prefs=[(0.3, 0.6), (0.3, 0.6)], miscalibration=0.4)
    assert theorem1_bound(w, RetrievalPolicy.oracle_top_m(4), (0.3, 0.6)) == 0.0


def test_bound_calibrated_equal_preferences():
    rng = np.random.default_rng(6)
    w = random_world(rng, n_contexts=4, n_items=9, prefs=[(0.5, 0.2), (0.5, 0.2)])
    pol = RetrievalPolicy.oracle_top_m(4)
    alpha = np.array([0.1, 0.9])
    s = shared_space(w.context_dist[1], w.context_dist[0]).weights
    expected = 0.0
    for x in range(4):
        j = serve(w, x, retrieve(pol, w, x), alpha)
        for k in range(2):
            expected += s[x] * 2 * abs(alpha[k] - w.true_prefs[0][k]) * w.scorer_outputs[x, j, k]
    assert theorem1_bound(w, pol, alpha) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_bound_dominates_preference_term(seed):
    rng = np.random.default_rng([seed, 1])
    w = random_world(rng, n_contexts=5, n_items=15, miscalibration=float(rng.uniform(0, 2)))
    alpha = rng.random(2) + 0.01
    pol = RetrievalPolicy.oracle_top_m(int(rng.integers(1, 16)))
    assert decompose_gap(w, pol, alpha).term_preference <= theorem1_bound(w, pol, alpha) + 1e-12


def test_retrieval_quality_full_is_global_optimum():
    rng = np.random.default_rng(7)
    w = random_world(rng, n_items=10)
    weights = rng.dirichlet(np.ones(w.shape[0]))
    for pol in (RetrievalPolicy.oracle_top_m(10), RetrievalPolicy.single_label_top_m(10, 1)):
        expected = sum(weights[x] * w.outcome_probs[x].sum(axis=1).max() for x in range(w.shape[0]))
        assert retrieval_quality(w, pol, weights) == pytest.approx(expected, abs=1e-12)


def test_retrieval_quality_monotone_in_m():
    rng = np.random.default_rng(8)
    w = random_world(rng, n_items=20)
    q = [retrieval_quality(w, RetrievalPolicy.oracle_top_m(m), w.context_dist[0]) for m in range(1, 21)]
    assert np.all(np.diff(q) >= 0)
    # oracle top-1 already holds the best item
    assert q[0] == q[-1]


def test_retrieval_quality_single_label_loses_on_conflicting_labels():
    j = np.arange(10) / 9
    w = array_world(np.stack([0.1 + 0.8 * j, 0.95 - 0.9 * j**0.5], axis=-1)[None])
    oracle = retrieval_quality(w, RetrievalPolicy.oracle_top_m(3), [1.0])
    single = retrieval_quality(w, RetrievalPolicy.single_label_top_m(3, 0), [1.0])
    assert single < oracle


def test_weight_grid_excludes_origin():
    g = weight_grid(21, 2)
    assert len(g) == 21 * 21 - 1
    assert np.all(g.max(axis=1) > 0)


def test_theorem2_no_degradation_is_inapplicable():
    world, pol = degraded_regime(np.random.default_rng(0), keep_fraction=1.0)
    with pytest.raises(InapplicableConstructionError):
        theorem2_check(world, pol)


def test_theorem2_needs_degraded_policy():
    world, _ = degraded_regime(np.random.default_rng(0))
    with pytest.raises(UnsupportedPolicyError):
        theorem2_check(world, RetrievalPolicy.oracle_top_m(5))


def test_theorem2_constructed_regime_holds():
    world, pol = degraded_regime(np.random.default_rng(1))
    rep = theorem2_check(world, pol, epsilon_target=0.05)
    assert rep.epsilon >= 0.05
    assert rep.satisfied
    # with uniform labels the served value ignores alpha, so the gap is eps * mean(alpha*(1))
    assert rep.sup_difference == pytest.approx(rep.epsilon * world.true_prefs[1].mean(), abs=1e-12)


def test_theorem2_grid_refinement():
    # a generated world: the sup over a 41-point grid vs. a 10x finer one
    rng = np.random.default_rng(2)
    cfg = random_config(rng, n_contexts=6, n_items=40, prefs=[(0.8, 0.3), (0.2, 0.9)],
                        context_dist=[(0.05, 0.05, 0.1, 0.2, 0.3, 0.3), (0.3, 0.3, 0.2, 0.1, 0.05, 0.05)])
    w = generate_world(cfg)
    pol = RetrievalPolicy.group_degraded(6, [3, 4, 5], 0.2, seed=3)
    coarse = theorem2_check(w, pol, grid_points=41)
    fine = theorem2_check(w, pol, grid_points=401)
    assert coarse.epsilon == fine.epsilon
    assert abs(coarse.sup_difference - fine.sup_difference) < 1e-3
