"""Retrieve, score, serve: the compositional recommender pipeline.

Retrieval picks ``m`` candidates per context, the serving layer picks the
candidate maximizing ``sum_k alpha_k f_k`` and the user's utility is
``sum_k alpha*_k(g) Y_k`` for the served item.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, PipelineError, UnsupportedPolicyError
from .worldgen import UserBatch, World

ORACLE_TOP_M = "oracle_top_m"
SINGLE_LABEL_TOP_M = "single_label_top_m"
RANDOM = "random"
GROUP_DEGRADED = "group_degraded"
POLICY_KINDS = (ORACLE_TOP_M, SINGLE_LABEL_TOP_M, RANDOM, GROUP_DEGRADED)
# scores this close (relative) to the best count as tied, so that rounding in
# sum_k alpha_k f_k cannot make serve(c * alpha) differ from serve(alpha)
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ServingWeights:
    alpha: tuple

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ConfigError("alpha", "must be a nonempty vector")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ConfigError("alpha", "entries must be finite and nonnegative")
        if not np.any(a > 0):
            raise ConfigError("alpha", "at least one entry must be positive")
        object.__setattr__(self, "alpha", tuple(a.tolist()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.alpha, dtype=dtype)


def as_alpha(alpha, n_labels=None):
    a = np.asarray(ServingWeights(tuple(np.ravel(alpha))).alpha)
    if n_labels is not None and a.size != n_labels:
        raise ConfigError("alpha", f"expected {n_labels} weights, got {a.size}")
    return a


@dataclass(frozen=True)
class RetrievalPolicy:
    """Candidate retrieval rule.

    ``group_degraded`` starts from the oracle top-m set and, on each target
    context, keeps every item independently with probability
    ``keep_fraction``, refilling from non-top items. The thinning is frozen
    per context by ``seed`` so the degraded retriever is itself a fixed
    function of the context.
    """

    kind: str = ORACLE_TOP_M
    m: int = 20
    label_index: int = 0
    target_contexts: tuple = ()
    keep_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError("policy", f"unknown kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.m < 1:
            raise ConfigError("m", "must be a positive integer")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("keep_fraction", "must lie in (0, 1]")
        object.__setattr__(self, "target_contexts", tuple(sorted(int(x) for x in self.target_contexts)))

    @property
    def deterministic(self):
        return self.kind != RANDOM

    @classmethod
    def oracle_top_m(cls, m):
        return cls(ORACLE_TOP_M, m)

    @classmethod
    def single_label_top_m(cls, m, label_index):
        return cls(SINGLE_LABEL_TOP_M, m, label_index=label_index)

    @classmethod
    def random(cls, m):
        return cls(RANDOM, m)

    @classmethod
    def group_degraded(cls, m, target_contexts, keep_fraction, seed=0):
        return cls(GROUP_DEGRADED, m, target_contexts=tuple(target_contexts),
                   keep_fraction=keep_fraction, seed=seed)

    def check(self, world: World):
        _, M, K = world.shape
        if self.m > M:
            raise ConfigError("m", f"cannot retrieve {self.m} of {M} items")
        if self.kind == SINGLE_LABEL_TOP_M and not 0 <= self.label_index < K:
            raise ConfigError("label_index", f"must be below {K}")
        return self


def _top_m(values, m):
    # stable sort on the negated key: ties go to the lower item index
    return np.argsort(-values, kind="stable")[:m]


def retrieve(policy: RetrievalPolicy, world: World, context, seed=None) -> np.ndarray:
    """Return the retrieved item indices for ``context`` in ascending order."""
    policy.check(world)
    X, M, _ = world.shape
    if not 0 <= context < X:
        raise IndexError(f"context {context} out of range")
    p = world.outcome_probs[context]
    if policy.kind == ORACLE_TOP_M:
        chosen = _top_m(p.sum(axis=1), policy.m)
    elif policy.kind == SINGLE_LABEL_TOP_M:
        chosen = _top_m(p[:, policy.label_index], policy.m)
    elif policy.kind == RANDOM:
        rng = np.random.default_rng(seed)
        chosen = rng.permutation(M)[: policy.m]
    else:
        top = _top_m(p.sum(axis=1), policy.m)
        if context not in policy.target_contexts or policy.keep_fraction == 1:
            chosen = top
        else:
            rng = np.random.default_rng([policy.seed, context])
            keep = rng.random(policy.m) < policy.keep_fraction
            kept = top[keep]
            rest = np.setdiff1d(np.arange(M), top)
            # dropped top items come back only when the corpus runs out
            refill = np.concatenate([rng.permutation(rest), top[~keep]])[: policy.m - kept.size]
            chosen = np.concatenate([kept, refill])
    return np.sort(chosen)


def retrieval_sets(policy: RetrievalPolicy, world: World):
    """Candidate sets for every context; only defined for deterministic policies."""
    if not policy.deterministic:
        raise UnsupportedPolicyError("random retrieval has no fixed candidate set; use run_batch")
    return [retrieve(policy, world, x) for x in range(world.shape[0])]


def _first_best(scores, axis=0):
    """Index of the first score within TIE_RTOL of the maximum along ``axis``."""
    best = np.max(scores, axis=axis, keepdims=True)
    return np.argmax(scores >= best - TIE_RTOL * np.abs(best), axis=axis)


def serve(world: World, context, candidates, alpha) -> int:
    cand = np.sort(np.asarray(candidates, dtype=np.int64))
    if cand.size == 0:
        raise PipelineError(f"empty candidate set for context {context}; check the retrieval policy")
    a = as_alpha(alpha, world.shape[2])
    scores = world.scorer_outputs[context, cand] @ a
    return int(cand[_first_best(scores)])


def served_items(world: World, policy: RetrievalPolicy, alphas) -> np.ndarray:
    """Served item per (alpha, context) for a batch of weight vectors, shape (A, X)."""
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    sets = retrieval_sets(policy, world)
    out = np.empty((alphas.shape[0], len(sets)), dtype=np.int64)
    for x, cand in enumerate(sets):
        scores = world.scorer_outputs[x, cand] @ alphas.T  # (m, A)
        out[:, x] = cand[_first_best(scores, axis=0)]
    return out


def expected_utility(world: World, context, group, item) -> float:
    X, M, _ = world.shape
    if not (0 <= context < X and 0 <= item < M and 0 <= group < world.n_groups):
        raise IndexError(f"(context={context}, group={group}, item={item}) out of range")
    return float(world.true_prefs[group] @ world.outcome_probs[context, item])


def context_utilities(world: World, policy: RetrievalPolicy, alphas, prefs) -> np.ndarray:
    """Expected utility under preference vector ``prefs`` at every context, shape (A, X)."""
    items = served_items(world, policy, alphas)
    X = world.shape[0]
    probs = world.outcome_probs[np.arange(X)[None, :], items]  # (A, X, K)
    return probs @ np.asarray(prefs, dtype=float)


def exact_group_utility(world: World, policy: RetrievalPolicy, alpha, group) -> float:
    """E_g[U_g] as an exact sum over contexts."""
    a = as_alpha(alpha, world.shape[2])
    u = context_utilities(world, policy, a, world.true_prefs[group])[0]
    return float(world.context_dist[group] @ u)


def utility_surface(world: World, policy: RetrievalPolicy, alphas, prefs, weights) -> np.ndarray:
    """``sum_x weights[x] * U(x; alpha)`` for every row of ``alphas``."""
    return context_utilities(world, policy, alphas, prefs) @ np.asarray(weights, dtype=float)


@dataclass(frozen=True, eq=False)
class GroupOutcome:
    mean_expected_utility: np.ndarray
    mean_realized_utility: np.ndarray
    counts: np.ndarray
    empty_flags: np.ndarray

    @property
    def n_users(self):
        return int(self.counts.sum())

    @property
    def pooled_realized_utility(self):
        return float(self.counts @ self.mean_realized_utility / self.counts.sum())

    @property
    def pooled_expected_utility(self):
        return float(self.counts @ self.mean_expected_utility / self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, GroupOutcome):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("mean_expected_utility", "mean_realized_utility", "counts", "empty_flags"))


def run_batch(world: World, policy: RetrievalPolicy, alpha, batch: UserBatch, seed) -> GroupOutcome:
    """Serve every user in ``batch`` once and aggregate utilities by group.

    All randomness comes from one generator seeded by ``seed``; row ``i`` of
    each draw belongs to session ``i``, so results do not depend on how the
    batch would be chunked.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("batch must be nonempty")
    policy.check(world)
    a = as_alpha(alpha, world.shape[2])
    X, M, K = world.shape
    rng = np.random.default_rng(seed)
    ctx, grp = batch.contexts, batch.groups

    if policy.deterministic:
        items = served_items(world, policy, a)[0][ctx]
    else:
        cand = np.sort(np.argsort(rng.random((n, M)), axis=1)[:, : policy.m], axis=1)
        scores = world.scorer_outputs[ctx[:, None], cand] @ a  # (n, m)
        items = cand[np.arange(n), _first_best(scores, axis=1)]

    probs = world.outcome_probs[ctx, items]  # (n, K)
    prefs = world.true_prefs[grp]  # (n, K)
    y = (rng.random((n, K)) < probs).astype(float)
    expected = np.einsum("nk,nk->n", prefs, probs)
    realized = np.einsum("nk,nk->n", prefs, y)

    G = world.n_groups
    counts = np.bincount(grp, minlength=G)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_exp = np.bincount(grp, weights=expected, minlength=G) / counts
        mean_real = np.bincount(grp, weights=realized, minlength=G) / counts
    empty = counts == 0
    mean_exp[empty] = 0.0
    mean_real[empty] = 0.0
    return GroupOutcome(mean_exp, mean_real, counts, empty)
