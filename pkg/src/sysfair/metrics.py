"""Group fairness metrics and the utility-gap diagnostics.

All expectations over contexts are exact finite sums. Decomposition and
bounds compare group 1 against group 0.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DisjointSupportError, InapplicableConstructionError, UnsupportedPolicyError
from .pipeline import GroupOutcome  # noqa: F401  (re-exported: metrics consume it)
from .pipeline import (GROUP_DEGRADED, RetrievalPolicy, as_alpha, context_utilities, retrieval_sets,
                       served_items)
from .worldgen import World


def der(mu) -> float:
    """Deviation from equal representation, renormalized so 1 means equal.

    ``1 - k/(k-1) * sum_i (mu_i / sum(mu) - 1/k)**2``; returns 1 when every
    mean is zero.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size < 2:
        raise ValueError("der needs a vector of at least two group means")
    if not np.all(np.isfinite(mu)) or np.any(mu < 0):
        raise ValueError("group means must be finite and nonnegative")
    total = mu.sum()
    if total == 0:
        return 1.0
    k = mu.size
    shares = mu / total
    return float(1.0 - k / (k - 1) * np.sum((shares - 1.0 / k) ** 2))


@dataclass(frozen=True, eq=False)
class SharedDistribution:
    weights: np.ndarray


def shared_space(p1, p0) -> SharedDistribution:
    """Normalized ``p1 * p0 / (p1 + p0)``: mass only where both groups live."""
    p1 = np.asarray(p1, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if np.array_equal(p1, p0) and p1.sum() > 0:
        # coinciding inputs are already a distribution; returning them as-is
        # keeps the shift terms of the gap decomposition exactly zero
        return SharedDistribution(p1.copy())
    denom = p1 + p0
    s = np.divide(p1 * p0, denom, out=np.zeros_like(denom), where=denom > 0)
    total = s.sum()
    if total <= 0:
        raise DisjointSupportError("context distributions have disjoint support; shared space is empty")
    return SharedDistribution(s / total)


def _two_groups(world):
    if world.n_groups != 2:
        raise ValueError(f"gap analysis needs exactly two groups, world has {world.n_groups}")


@dataclass(frozen=True)
class GapDecomposition:
    term_x_shift_1: float
    term_preference: float
    term_x_shift_2: float
    total_gap: float

    def to_dict(self):
        return asdict(self)


def decompose_gap(world: World, policy: RetrievalPolicy, alpha) -> GapDecomposition:
    _two_groups(world)
    a = as_alpha(alpha, world.shape[2])
    cd = world.context_dist
    s = shared_space(cd[1], cd[0]).weights
    u1 = context_utilities(world, policy, a, world.true_prefs[1])[0]
    u0 = context_utilities(world, policy, a, world.true_prefs[0])[0]
    e1_u1, es_u1 = cd[1] @ u1, s @ u1
    e0_u0, es_u0 = cd[0] @ u0, s @ u0
    return GapDecomposition(
        term_x_shift_1=float(e1_u1 - es_u1),
        term_preference=float(es_u1 - es_u0),
        term_x_shift_2=float(es_u0 - e0_u0),
        total_gap=float(e1_u1 - e0_u0),
    )


def theorem1_bound(world: World, policy: RetrievalPolicy, alpha) -> float:
    """Preference-misspecification upper bound on the shared-space utility gap.

    Sums, under the shared distribution and at the served item,
    ``|a*_1 - a*_0| E|Y - f| + |a - a*_0| f + |a - a*_1| f`` over labels,
    with ``E|Y - f| = f (1 - p) + (1 - f) p`` for Bernoulli ``Y``.
    """
    _two_groups(world)
    a = as_alpha(alpha, world.shape[2])
    X = world.shape[0]
    cd = world.context_dist
    s = shared_space(cd[1], cd[0]).weights
    items = served_items(world, policy, a)[0]
    f = world.scorer_outputs[np.arange(X), items]  # (X, K)
    p = world.outcome_probs[np.arange(X), items]
    a0, a1 = world.true_prefs[0], world.true_prefs[1]
    abs_resid = f * (1 - p) + (1 - f) * p
    per_context = abs_resid @ np.abs(a1 - a0) + f @ np.abs(a - a0) + f @ np.abs(a - a1)
    return float(s @ per_context)


def retrieval_quality(world: World, policy: RetrievalPolicy, weights) -> float:
    """Expected best total-outcome value among the retrieved items."""
    p = world.outcome_probs
    best = np.array([p[x, cand].sum(axis=1).max() for x, cand in enumerate(retrieval_sets(policy, world))])
    return float(np.asarray(weights, dtype=float) @ best)


def weight_grid(n_per_axis, n_labels):
    """Regular grid over [0, 1]^K without the all-zero vector."""
    axis = np.linspace(0.0, 1.0, n_per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * n_labels), indexing="ij"), axis=-1).reshape(-1, n_labels)
    return mesh[np.any(mesh > 0, axis=1)]


@dataclass(frozen=True)
class Theorem2Report:
    epsilon: float
    sup_difference: float
    bound: float
    satisfied: bool
    grid_points: int

    def to_dict(self):
        return asdict(self)


def theorem2_check(world: World, degraded_policy: RetrievalPolicy, epsilon_target=0.0, grid_points=41) -> Theorem2Report:
    """Check the retrieval-degradation lower bound on a constructed world.

    Measures ``eps = Q(P(x|G=1)) - Q(S_X)`` and compares the difference of
    best-case group-1 utilities (sup over an ``alpha`` grid, scorer fixed at
    the calibrated truth) with ``eps * min_k alpha*_k(1)``.
    """
    _two_groups(world)
    if degraded_policy.kind != GROUP_DEGRADED:
        raise UnsupportedPolicyError("theorem2_check expects a group_degraded retrieval policy")
    if not np.array_equal(world.scorer_outputs, world.outcome_probs):
        raise InapplicableConstructionError("theorem2_check requires a calibrated (miscalibration = 0) world")
    cd = world.context_dist
    s = shared_space(cd[1], cd[0]).weights
    eps = retrieval_quality(world, degraded_policy, cd[1]) - retrieval_quality(world, degraded_policy, s)
    if eps <= max(float(epsilon_target), 1e-12):
        raise InapplicableConstructionError(
            f"retrieval-quality gap {eps:.3g} does not exceed the target {epsilon_target}; bound is vacuous")
    grid = weight_grid(grid_points, world.shape[2])
    prefs1 = world.true_prefs[1]
    cu = context_utilities(world, degraded_policy, grid, prefs1)  # (A, X)
    sup_diff = float((cu @ cd[1]).max() - (cu @ s).max())
    bound = float(eps * prefs1.min())
    return Theorem2Report(float(eps), sup_diff, bound, sup_diff >= bound, len(grid))
