"""Ranking and calibration metrics: AUROC, average precision, Brier, bootstrap CIs."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """The metric needs a class that is absent from the labels."""


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length ({len(s)} vs {len(y)})")
    if s.size == 0:
        raise ValueError("empty scored set")
    return s, y


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    # tie groups get the average of their 1-based ranks
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    s, y = _check(scores, labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes")
    r = _midranks(s)
    u = r[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _threshold_counts(s: np.ndarray, y: np.ndarray):
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    last = np.r_[ss[1:] != ss[:-1], True]
    tp = np.cumsum(yy)[last].astype(float)
    fp = np.cumsum(~yy)[last].astype(float)
    return ss[last], tp, fp


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) at every distinct score, starting at (0, 0)."""
    s, y = _check(scores, labels)
    P, N = y.sum(), (~y).sum()
    if P == 0 or N == 0:
        raise UndefinedMetricError("ROC needs both classes")
    thr, tp, fp = _threshold_counts(s, y)
    return np.r_[0.0, fp / N], np.r_[0.0, tp / P], np.r_[np.inf, thr]


def roc_auc_trapezoid(scores, labels) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def pr_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(recall, precision, thresholds) with tied scores processed as one group."""
    s, y = _check(scores, labels)
    if not y.any():
        raise UndefinedMetricError("precision-recall needs at least one positive")
    thr, tp, fp = _threshold_counts(s, y)
    return tp / y.sum(), tp / (tp + fp), thr


def auprc(scores, labels) -> float:
    """Average precision: sum over thresholds of precision x recall increment."""
    recall, precision, _ = pr_curve(scores, labels)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def brier(scores, labels) -> float:
    s, y = _check(scores, labels)
    if s.min() < 0 or s.max() > 1:
        raise ValueError("Brier score needs probabilities in [0, 1]")
    return float(np.mean((s - y) ** 2))


def bootstrap_ci(metric: Callable, scores, labels, n_boot: int = 1000, level: float = 0.95,
                 seed=0, max_retries: int = 20) -> tuple[float, float]:
    """Percentile bootstrap interval.

    Resamples lacking a class the metric needs are redrawn up to
    ``max_retries`` times, then skipped (the count is logged).
    """
    s, y = _check(scores, labels)
    rng = np.random.default_rng(seed)
    stats, skipped = [], 0
    n = len(s)
    for _ in range(n_boot):
        for _attempt in range(max_retries + 1):
            idx = rng.integers(0, n, n)
            try:
                stats.append(metric(s[idx], y[idx]))
                break
            except UndefinedMetricError:
                continue
        else:
            skipped += 1
    if skipped:
        log.warning("bootstrap: skipped %d of %d resamples with a missing class", skipped, n_boot)
    if not stats:
        raise UndefinedMetricError("no valid bootstrap resample")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.array(stats), [alpha, 1.0 - alpha])
    return float(lo), float(hi)
