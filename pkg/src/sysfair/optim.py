"""Acquisition functions, 2-D Pareto bookkeeping and the weight-search loop.

Three strategies choose the next serving-weight vector:

* ``random``: uniform draw from the unit box;
* ``ei``: expected improvement on pooled utility;
* ``fair_ehvi``: Monte-Carlo expected hypervolume improvement over
  (utility, DER), proposing ``q`` points and serving the one with the
  highest DER posterior mean.

``cei`` (constrained EI with a DER slack) is available for ablations.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, qmc

from . import gp
from .seeding import derive_seed

STRATEGIES = ("random", "ei", "fair_ehvi", "cei")
REFERENCE_POINT = (0.0, 0.0)


def expected_improvement(mean, sd, best):
    """Closed-form E[(Y - best)^+] for Y ~ N(mean, sd^2); vectorized."""
    mean, sd = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(sd, dtype=float))
    if np.any(sd < 0):
        raise ValueError("sd must be nonnegative")
    scalar = mean.ndim == 0
    mean, sd = np.atleast_1d(mean), np.atleast_1d(sd)
    imp = mean - best
    out = np.maximum(imp, 0.0)
    pos = sd > 0
    with np.errstate(over="ignore"):
        z = imp[pos] / sd[pos]
        out[pos] = imp[pos] * norm.cdf(z) + sd[pos] * norm.pdf(z)
    return float(out[0]) if scalar else out


def constrained_ei(mean, sd, best, c_mean, c_sd, gamma):
    """EI times P(c <= gamma) for an independent Gaussian constraint c."""
    c_mean, c_sd = np.broadcast_arrays(np.asarray(c_mean, dtype=float), np.asarray(c_sd, dtype=float))
    if np.any(c_sd < 0):
        raise ValueError("c_sd must be nonnegative")
    scalar = c_mean.ndim == 0 and np.ndim(mean) == 0
    c_mean, c_sd = np.atleast_1d(c_mean), np.atleast_1d(c_sd)
    feasible = np.where(c_mean <= gamma, 1.0, 0.0)
    pos = c_sd > 0
    feasible[pos] = norm.cdf((gamma - c_mean[pos]) / c_sd[pos])
    out = np.asarray(expected_improvement(mean, sd, best)) * feasible
    return float(out[0]) if scalar else out


def pareto_front(points):
    """Indices (ascending) of non-dominated points under joint maximization.

    Exact duplicates on the front keep their first occurrence only.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    order = sorted(range(len(pts)), key=lambda i: (-pts[i, 0], -pts[i, 1], i))
    keep, best_d = [], -np.inf
    for i in order:
        if pts[i, 1] > best_d:
            keep.append(i)
            best_d = pts[i, 1]
    return sorted(keep)


def _staircase(front):
    """Front rows sorted by first coordinate ascending (second then descends)."""
    f = front[pareto_front(front)]
    return f[np.argsort(f[:, 0], kind="stable")]


def hypervolume_2d(front, reference=REFERENCE_POINT) -> float:
    pts = np.asarray(front, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    if len(pts) == 0:
        return 0.0
    if np.any(pts < ref):
        raise ValueError("every front point must dominate the reference point")
    f = _staircase(pts)
    widths = np.diff(np.concatenate([[ref[0]], f[:, 0]]))
    return float(np.sum(widths * (f[:, 1] - ref[1])))


def hv_improvement(front, candidates, reference=REFERENCE_POINT):
    """HV(front + {c}) - HV(front) for each candidate row, vectorized.

    Candidates are clamped up to the reference point first, so a candidate
    that does not dominate the reference adds nothing.
    """
    ref = np.asarray(reference, dtype=float)
    c = np.maximum(np.atleast_2d(np.asarray(candidates, dtype=float)), ref)
    box = (c[:, 0] - ref[0]) * (c[:, 1] - ref[1])
    pts = np.asarray(front, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return box
    f = _staircase(pts)
    cu = np.minimum(f[None, :, 0], c[:, 0:1])  # (S, n)
    cd = np.minimum(f[None, :, 1], c[:, 1:2])
    widths = np.diff(np.concatenate([np.full((len(c), 1), ref[0]), cu], axis=1), axis=1)
    covered = np.sum(widths * (cd - ref[1]), axis=1)
    return np.maximum(box - covered, 0.0)


class ParetoArchive:
    """Evaluated (alpha, utility, der) points and their non-dominated front."""

    def __init__(self, reference_point=REFERENCE_POINT):
        self.reference_point = tuple(float(r) for r in reference_point)
        self.alphas = []
        self.objectives = []

    @classmethod
    def from_history(cls, history, reference_point=REFERENCE_POINT):
        archive = cls(reference_point)
        for obs in history:
            archive.add(obs.alpha, obs.utility, obs.der)
        return archive

    def add(self, alpha, utility, der):
        self.alphas.append(np.asarray(alpha, dtype=float))
        self.objectives.append((float(utility), float(der)))

    def __len__(self):
        return len(self.objectives)

    @property
    def front(self):
        if not self.objectives:
            return []
        return pareto_front(self.objectives)

    def front_points(self):
        pts = np.asarray(self.objectives, dtype=float).reshape(-1, 2)
        f = pts[self.front] if len(pts) else pts
        # points not dominating the reference contribute no volume
        return f[np.all(f >= np.asarray(self.reference_point), axis=1)]

    def hypervolume(self):
        return hypervolume_2d(self.front_points(), self.reference_point)


@dataclass(frozen=True, eq=False)
class Candidate:
    alpha: np.ndarray
    acquisition_value: float
    der_posterior_mean: float


class Observation(NamedTuple):
    alpha: tuple
    utility: float
    der: float


def ehvi_from_moments(mu_u, sd_u, mu_d, sd_d, front, rng, n_mc, reference=REFERENCE_POINT) -> float:
    """Monte-Carlo EHVI for one point with independent Gaussian objectives."""
    z = rng.standard_normal((n_mc, 2))
    samples = np.column_stack([mu_u + sd_u * z[:, 0], mu_d + sd_d * z[:, 1]])
    return float(hv_improvement(front, samples, reference).mean())


def ehvi_mc(gp_utility, gp_der, x, archive: ParetoArchive, n_mc, seed) -> float:
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    mu_u, var_u = gp.posterior(gp_utility, x)
    mu_d, var_d = gp.posterior(gp_der, x)
    return ehvi_from_moments(mu_u, np.sqrt(var_u), mu_d, np.sqrt(var_d), archive.front_points(),
                             np.random.default_rng(seed), n_mc, archive.reference_point)


def ehvi_batch(gp_utility, gp_der, points, archive: ParetoArchive, n_mc, seed):
    """EHVI at every row of ``points``; row ``i`` draws from seed ``(seed, i)``."""
    pts = np.atleast_2d(points)
    mu_u, var_u = gp.predict(gp_utility, pts)
    mu_d, var_d = gp.predict(gp_der, pts)
    sd_u, sd_d = np.sqrt(var_u), np.sqrt(var_d)
    z = np.stack([np.random.default_rng([seed, i]).standard_normal((n_mc, 2)) for i in range(len(pts))])
    samples = np.stack([mu_u[:, None] + sd_u[:, None] * z[..., 0],
                        mu_d[:, None] + sd_d[:, None] * z[..., 1]], axis=-1)  # (P, n_mc, 2)
    hvi = hv_improvement(archive.front_points(), samples.reshape(-1, 2), archive.reference_point)
    return hvi.reshape(len(pts), n_mc).mean(axis=1), mu_d


def sobol_points(n, dim, seed):
    """First ``n`` points of a scrambled Sobol sequence in [0, 1]^dim."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    m = max(int(np.ceil(np.log2(max(n, 1)))), 0)
    return sampler.random_base2(m)[:n]


def propose_q(gp_utility, gp_der, archive: ParetoArchive, q, pool_size, seed, n_mc=128):
    """Score a quasi-uniform pool by EHVI and return the ``q`` best, best first."""
    if q < 1 or pool_size < q:
        raise ValueError("need 1 <= q <= pool_size")
    dim = gp_utility.inputs.shape[1]
    pool = sobol_points(pool_size, dim, derive_seed(seed, "pool"))
    acq, der_mean = ehvi_batch(gp_utility, gp_der, pool, archive, n_mc, derive_seed(seed, "mc"))
    order = np.argsort(-acq, kind="stable")[:q]
    return [Candidate(pool[i], float(acq[i]), float(der_mean[i])) for i in order]


def fair_select(candidates) -> Candidate:
    if not candidates:
        raise ValueError("no candidates to select from")
    best = min(range(len(candidates)),
               key=lambda i: (-candidates[i].der_posterior_mean, -candidates[i].acquisition_value, i))
    return candidates[best]


def init_points(seed, dim, n_init):
    """Shared low-discrepancy design used by every strategy's first iterations."""
    return sobol_points(n_init, dim, derive_seed(seed, "init"))


def next_alpha(strategy, history, seed, dim, *, n_init=5, pool_size=512, q=10, n_mc=128, cei_gamma=0.1):
    """Next serving-weight vector in [0, 1]^dim.

    ``history`` holds :class:`Observation` records of earlier iterations of
    this trial; ``seed`` is the trial seed (shared across strategies so the
    initial design coincides).
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    t = len(history)
    if t < n_init:
        return init_points(seed, dim, n_init)[t]
    step_seed = derive_seed(seed, strategy, t)
    if strategy == "random":
        return np.random.default_rng(step_seed).random(dim)

    x = np.array([o.alpha for o in history], dtype=float)
    u = np.array([o.utility for o in history])
    d = np.array([o.der for o in history])
    gp_u = gp.fit(x, u)
    if strategy == "fair_ehvi":
        gp_d = gp.fit(x, d)
        archive = ParetoArchive.from_history(history)
        return fair_select(propose_q(gp_u, gp_d, archive, q, pool_size, step_seed, n_mc)).alpha

    pool = sobol_points(pool_size, dim, derive_seed(step_seed, "pool"))
    mean, var = gp.predict(gp_u, pool)
    acq = expected_improvement(mean, np.sqrt(var), u.max())
    if strategy == "cei":
        # constraint c = 1 - DER <= cei_gamma
        gp_d = gp.fit(x, d)
        d_mean, d_var = gp.predict(gp_d, pool)
        acq = constrained_ei(mean, np.sqrt(var), u.max(), 1.0 - d_mean, np.sqrt(d_var), cei_gamma)
    return pool[int(np.argmax(acq))]
