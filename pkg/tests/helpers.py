"""World builders shared by the test modules."""
import numpy as np

from sysfair.worldgen import WorldConfig, generate_world, world_from_arrays


def _normalize(v):
    v = np.asarray(v, dtype=float)
    v = v / v.sum()
    # force an exact unit sum so validate() accepts it
    v[-1] = 1.0 - v[:-1].sum()
    return tuple(v)


def random_config(rng, n_contexts=6, n_items=12, n_labels=2, miscalibration=0.0, prefs=None,
                  context_dist=None, prevalence=(0.7, 0.3), label_correlation=0.0):
    if context_dist is None:
        context_dist = [_normalize(rng.dirichlet(np.ones(n_contexts))) for _ in prevalence]
    if prefs is None:
        prefs = rng.uniform(0.05, 1.0, size=(len(prevalence), n_labels))
    return WorldConfig(
        n_contexts=n_contexts, n_items=n_items, n_labels=n_labels,
        group_prevalence=_normalize(prevalence), context_dist=context_dist, true_prefs=prefs,
        miscalibration=miscalibration, seed=int(rng.integers(2**32)), label_correlation=label_correlation,
    )


def random_world(rng, **kw):
    return generate_world(random_config(rng, **kw))


def array_world(p, prefs=((1.0, 1.0), (1.0, 1.0)), context_dist=None, prevalence=(0.5, 0.5), f=None):
    """Wrap a hand-written ``p[x, j, k]`` tensor."""
    p = np.asarray(p, dtype=float)
    X, M, K = p.shape
    if context_dist is None:
        context_dist = [tuple(np.full(X, 1.0 / X))] * len(prevalence)
    cfg = WorldConfig(X, M, K, prevalence, context_dist, prefs)
    return world_from_arrays(cfg, p, f)


def degraded_regime(rng, n_contexts=6, n_items=30, n_labels=2, m=5, n_good=2, high=0.9, low=0.1,
                    heavy_mass=0.9, keep_fraction=0.05):
    """Constructed world where retrieval is thinned only where group 0 lives.

    Every item has the same value on all labels: ``n_good`` items per
    context are worth ``high`` per label, the rest ``low``. The first half of
    the contexts carries ``heavy_mass`` of group 1, the second half the same
    share of group 0, and only the second half is degraded.
    """
    from sysfair.pipeline import RetrievalPolicy

    X, M, K = n_contexts, n_items, n_labels
    p = np.full((X, M, K), low)
    for x in range(X):
        p[x, rng.choice(M, size=n_good, replace=False)] = high
    half = X // 2
    first = np.r_[np.full(half, heavy_mass / half), np.full(X - half, (1 - heavy_mass) / (X - half))]
    cd1 = _normalize(first * rng.uniform(0.8, 1.2, X))
    cd0 = _normalize(first[::-1] * rng.uniform(0.8, 1.2, X))
    prefs = rng.uniform(0.1, 1.0, size=(2, K))
    world = array_world(p, prefs=prefs, context_dist=[cd0, cd1], prevalence=(0.8, 0.2))
    policy = RetrievalPolicy.group_degraded(m, range(half, X), keep_fraction, seed=int(rng.integers(2**31)))
    return world, policy
