"""Wilcoxon signed-rank test for paired method comparisons."""
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DegenerateSampleError

EXACT_MAX_N = 20


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of the positive differences
    p_value: float
    n: int
    method: str


def _null_distribution(doubled_ranks):
    """W (in doubled units) for every one of the 2^n sign assignments."""
    sums = np.zeros(1, dtype=np.int64)
    for r in doubled_ranks:
        sums = np.concatenate([sums, sums + r])
    return sums


def wilcoxon_signed_rank(diffs, alternative="greater", method="auto") -> WilcoxonResult:
    """Signed-rank test of H0: differences symmetric about zero.

    Zeros are dropped and tied magnitudes share their average rank. With at
    most 20 nonzero differences the p-value is exact, by enumerating every
    sign assignment; beyond that a tie- and continuity-corrected normal
    approximation is used. ``method`` forces ``"exact"`` or ``"normal"``.
    """
    if alternative not in ("greater", "two_sided"):
        raise ValueError("alternative must be 'greater' or 'two_sided'")
    d = np.asarray(diffs, dtype=float).ravel()
    if not np.all(np.isfinite(d)):
        raise ValueError("differences must be finite")
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise DegenerateSampleError("all differences are zero")
    ranks = rankdata(np.abs(d))  # average ranks, multiples of 1/2
    w = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"

    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        null = _null_distribution(doubled)
        w2 = int(round(2 * w))
        upper = np.count_nonzero(null >= w2) / null.size
        lower = np.count_nonzero(null <= w2) / null.size
    elif method == "normal":
        mean = n * (n + 1) / 4
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - np.sum(tie_counts**3 - tie_counts) / 48
        sd = np.sqrt(var)
        upper = float(norm.sf((w - mean - 0.5) / sd))
        lower = float(norm.cdf((w - mean + 0.5) / sd))
    else:
        raise ValueError("method must be 'auto', 'exact' or 'normal'")

    p = upper if alternative == "greater" else min(1.0, 2 * min(upper, lower))
    return WilcoxonResult(w, float(p), n, method)
