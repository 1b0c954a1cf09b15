import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delirium_risk.evaluation import (
    UndefinedMetricError, auprc, auroc, bootstrap_ci, brier, pr_curve, roc_auc_trapezoid, roc_curve,
)


def pair_oracle(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def ap_oracle(s, y):
    """Step through distinct thresholds from the top; tied scores enter together."""
    total_pos = sum(y)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(s), reverse=True):
        tp = sum(1 for a, l in zip(s, y) if a >= thr and l)
        fp = sum(1 for a, l in zip(s, y) if a >= thr and not l)
        recall = tp / total_pos
        ap += (recall - prev_recall) * tp / (tp + fp)
        prev_recall = recall
    return ap


def test_auroc_examples():
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auroc_single_class():
    with pytest.raises(UndefinedMetricError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auroc([0.1], [1, 0])
    with pytest.raises(ValueError):
        auroc([], [])


def random_small(rng):
    n = int(rng.integers(2, 21))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    # coarse grid so ties are common
    s = rng.integers(0, 6, n) / 5 if rng.random() < 0.5 else rng.random(n)
    return s, y


def test_auroc_pair_oracle_1000_sets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s, y = random_small(rng)
        assert abs(auroc(s, y) - pair_oracle(s, y)) <= 1e-12
        assert abs(roc_auc_trapezoid(s, y) - pair_oracle(s, y)) <= 1e-12


@given(st.lists(st.tuples(st.integers(0, 1000), st.booleans()), min_size=2, max_size=40))
def test_auroc_properties(data):
    # a millesimal grid keeps exp() strictly increasing in floating point
    s = np.array([a / 1000 for a, _ in data])
    y = np.array([b for _, b in data])
    if y.all() or not y.any():
        return
    a = auroc(s, y)
    assert auroc(np.exp(3 * s) - 7, y) == pytest.approx(a, abs=1e-12)
    assert auroc(-s, y) == pytest.approx(1 - a, abs=1e-12)
    assert roc_auc_trapezoid(s, y) == pytest.approx(a, abs=1e-12)


def test_roc_curve_shape():
    fpr, tpr, thr = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert fpr[0] == tpr[0] == 0 and fpr[-1] == tpr[-1] == 1
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert np.isinf(thr[0]) and len(thr) == 5


def test_ap_examples():
    assert auprc([0.9, 0.1], [1, 0]) == 1.0
    assert auprc([0.9, 0.1], [0, 1]) == 0.5
    with pytest.raises(UndefinedMetricError):
        auprc([0.2, 0.3], [0, 0])


def test_ap_exhaustive_small_sets():
    checked = 0
    for n in range(1, 6):
        for y in itertools.product([0, 1], repeat=n):
            if not any(y):
                continue
            for s in itertools.product([0.0, 0.5, 1.0], repeat=n):
                assert abs(auprc(s, y) - ap_oracle(s, y)) <= 1e-12
                checked += 1
    rng = np.random.default_rng(1)
    for n in range(6, 9):
        for y in itertools.product([0, 1], repeat=n):
            if not any(y):
                continue
            for _ in range(10):
                s = rng.integers(0, 4, n) / 3
                assert abs(auprc(s, y) - ap_oracle(list(s), y)) <= 1e-12
                checked += 1
    assert checked > 10_000


def test_pr_curve_ends_at_full_recall():
    recall, precision, _ = pr_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert recall[-1] == 1.0 and precision[-1] == 0.5
    assert np.all(np.diff(recall) >= 0)


@pytest.mark.parametrize("prevalence", [0.1, 0.35])
def test_random_scores_ap_near_prevalence(prevalence):
    rng = np.random.default_rng(2)
    y = rng.random(10_000) < prevalence
    assert abs(auprc(rng.random(10_000), y) - prevalence) < 0.05


def test_brier_examples():
    assert brier([1, 0, 1], [1, 0, 1]) == 0.0
    assert brier([0.5] * 4, [1, 0, 0, 1]) == 0.25
    assert brier([0.8, 0.3], [1, 0]) == pytest.approx(0.065, abs=1e-15)
    with pytest.raises(ValueError):
        brier([1.2], [1])


def test_brier_minimized_by_prevalence():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0])
    grid = np.linspace(0, 1, 101)
    best = grid[np.argmin([brier(np.full(len(y), c), y) for c in grid])]
    assert best == pytest.approx(y.mean())


def scored(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.random(n) < 0.3
    s = 1 / (1 + np.exp(-(rng.normal(size=n) + 1.5 * y)))
    return s, y


def test_bootstrap_degenerate_constant_metric():
    s, y = scored(40, 0)
    assert bootstrap_ci(lambda a, b: 0.7, s, y, n_boot=50) == (0.7, 0.7)


def test_bootstrap_contains_point():
    hits = 0
    for seed in range(100):
        s, y = scored(200, seed)
        lo, hi = bootstrap_ci(auroc, s, y, n_boot=300, seed=seed)
        hits += lo <= auroc(s, y) <= hi
    assert hits >= 99


def test_bootstrap_narrows_with_n():
    s, y = scored(50, 3)
    lo, hi = bootstrap_ci(auroc, s, y, n_boot=300, seed=0)
    s2, y2 = scored(5000, 3)
    lo2, hi2 = bootstrap_ci(auroc, s2, y2, n_boot=300, seed=0)
    assert hi - lo > hi2 - lo2


def test_bootstrap_deterministic_and_skips(caplog):
    s, y = scored(100, 4)
    assert bootstrap_ci(auprc, s, y, n_boot=100, seed=9) == bootstrap_ci(auprc, s, y, n_boot=100, seed=9)
    # one positive among 60: many resamples miss it
    y1 = np.zeros(60, dtype=bool)
    y1[0] = True
    lo, hi = bootstrap_ci(auroc, np.linspace(0, 1, 60), y1, n_boot=50, seed=0, max_retries=0)
    assert 0 <= lo <= hi <= 1 and "skipped" in caplog.text


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_metrics_in_range(seed):
    s, y = scored(30, seed)
    if y.all() or not y.any():
        return
    for m in (auroc, auprc, brier):
        assert 0.0 <= m(s, y) <= 1.0
