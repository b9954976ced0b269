"""Paired significance testing for per-subject accuracy comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .validation import check_array

EXACT_MAX_N = 25


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    statistic: float
    n_effective: int
    method: str


def significance(a, b) -> SignificanceResult:
    """Two-sided Wilcoxon signed-rank test on paired scores.

    Zero differences are dropped. Up to 25 nonzero pairs the p-value is
    exact, from the sign-flip distribution conditioned on the observed
    ranks (ties produce average ranks, handled by working on doubled
    ranks); beyond that a normal approximation with tie and continuity
    corrections is used.
    """
    a = check_array(a, name="a", ndim=1, dtype=np.float64)
    b = check_array(b, name="b", ndim=1, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.size} vs {b.size}")
    diffs = a - b
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        raise ValueError("all paired differences are zero")
    if diffs.size < 5:
        raise ValueError(
            f"need at least 5 nonzero differences, got {diffs.size}"
        )
    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    n = diffs.size
    if n <= EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_two_sided(doubled, int(round(2.0 * w_plus)))
        method = "exact"
    else:
        p = _normal_two_sided(ranks, w_plus)
        method = "normal"
    return SignificanceResult(p_value=p, statistic=w_plus, n_effective=n,
                              method=method)


def _exact_two_sided(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    # dp[s] counts sign assignments whose doubled positive-rank sum is s
    total = int(doubled_ranks.sum())
    dp = np.zeros(total + 1, dtype=np.float64)
    dp[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(dp)
        shifted[r:] = dp[:total + 1 - r]
        dp = dp + shifted
    m = dp.sum()
    lower = dp[: doubled_w + 1].sum() / m
    upper = dp[doubled_w:].sum() / m
    return float(min(1.0, 2.0 * min(lower, upper)))


def _normal_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = (n * (n + 1) * (2 * n + 1) / 24.0
                - (tie_counts.astype(np.float64) ** 3 - tie_counts).sum() / 48.0)
    continuity = 0.5 * np.sign(w_plus - mean)
    z = (w_plus - mean - continuity) / np.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(abs(z))))
