"""Regression metrics and the paired signed-rank test on squared errors."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .predictive import PredictiveDistribution

EXACT_MAX_N = 25


def _paired(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} targets, {y_pred.shape[0]} predictions")
    if y_true.shape[0] == 0:
        raise ValueError("metrics need at least one point")
    return y_true, y_pred


def mse(y_true, y_pred) -> float:
    y_true, y_pred = _paired(y_true, y_pred)
    r = y_true - y_pred
    return float(np.mean(r * r))


def smse(y_true, pred: PredictiveDistribution) -> float:
    """Mean of squared residuals, each divided by that point's predictive variance."""
    if not isinstance(pred, PredictiveDistribution):
        raise TypeError("smse needs a predictive distribution; point predictions have no variance")
    y_true, mean = _paired(y_true, pred.mean)
    var = np.asarray(pred.variance, dtype=np.float64)
    if var.shape != mean.shape or np.any(~(var > 0)):
        raise ValueError("every predictive variance must be positive")
    r = y_true - mean
    return float(np.mean(r * r / var))


def _signed_rank_counts(doubled_ranks):
    """Number of sign assignments reaching each value of twice the positive rank sum."""
    total = int(sum(doubled_ranks))
    counts = [0] * (total + 1)
    counts[0] = 1
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        reach += r
        for s in range(reach, r - 1, -1):
            counts[s] += counts[s - r]
    return counts


def paired_sq_error_test(errs_a, errs_b, min_n=6):
    """Two-sided Wilcoxon signed-rank test on per-patient differences ``a - b``.

    Zero differences are dropped.  With at most 25 non-zero differences the
    p-value comes from the exact null distribution of the positive rank sum
    (mid-ranks for ties); beyond that a normal approximation with tie
    correction is used.  Returns ``(statistic, p_value)`` where the statistic
    is the smaller of the positive and negative rank sums.
    """
    a = np.asarray(errs_a, dtype=np.float64).ravel()
    b = np.asarray(errs_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("paired error vectors must have equal length")
    if a.shape[0] < min_n:
        raise ValueError(f"need at least {min_n} paired values, got {a.shape[0]}")
    d = a - b
    d = d[d != 0]
    n = d.shape[0]
    if n == 0:
        return 0.0, 1.0
    ranks = stats.rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2
    statistic = min(t_plus, total - t_plus)

    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(int)
        counts = _signed_rank_counts(doubled)
        t2 = int(round(2 * t_plus))
        lower = sum(counts[: t2 + 1])
        upper = sum(counts[t2:])
        return statistic, min(1.0, 2 * min(lower, upper) / 2**n)

    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48
    z = (t_plus - total / 2) / math.sqrt(var)
    return statistic, float(min(1.0, 2 * stats.norm.sf(abs(z))))
