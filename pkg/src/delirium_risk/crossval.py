"""Stratified k-fold evaluation of the resample -> train -> score pipeline.

Resampling happens inside each training portion only. Every fold owns a
seed stream spawned from the master seed, so folds can run in any order
or in parallel processes and still give identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .evaluation import auprc, auroc, bootstrap_ci, brier
from .features import FeatureSequence, flatten, resample, to_arrays, unflatten
from .lstm import TrainConfig, predict, train
from .stats import z_quantile


@dataclass
class PipelineConfig:
    max_seq_len: int = 8
    smote_k: int = 5
    minority_ratio: float = 0.5
    majority_ratio: float = 1.0
    inner_val_fraction: float = 0.1
    folds: int = 10
    n_boot: int = 1000
    level: float = 0.95
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return asdict(self)


def stratified_folds(labels, k: int, seed) -> np.ndarray:
    """Fold index per sample; each class is dealt round-robin after a shuffle."""
    y = np.asarray(labels).astype(bool)
    counts = [int(y.sum()), int((~y).sum())]
    if min(counts) < k:
        raise ValueError(f"stratified {k}-fold split needs >= {k} samples per class, got {counts}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in (True, False):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % k
        # continue dealing where the previous class stopped so fold sizes stay within 1
        offset = (offset + len(idx)) % k
    return folds


def inner_split(labels: np.ndarray, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    val = []
    for cls in (True, False):
        idx = np.flatnonzero(labels == cls)
        n_val = max(1, int(round(fraction * len(idx)))) if len(idx) > 1 else 0
        val.extend(rng.choice(idx, size=n_val, replace=False).tolist())
    val_mask = np.zeros(len(labels), dtype=bool)
    val_mask[val] = True
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask)


@dataclass
class FoldResult:
    fold: int
    val_index: np.ndarray
    scores: np.ndarray
    n_train: int
    n_val: int
    n_resampled: int
    resampling_ids: frozenset
    auroc: float | None
    auprc: float | None
    brier: float
    selected_epoch: int

    def row(self) -> dict:
        return {
            "fold": self.fold, "n_train": self.n_train, "n_val": self.n_val,
            "n_resampled": self.n_resampled, "auroc": self.auroc, "auprc": self.auprc,
            "brier": self.brier, "selected_epoch": self.selected_epoch,
        }


def run_fold(fold: int, sequences: Sequence[FeatureSequence], fold_ids: np.ndarray,
             config: PipelineConfig, seed: np.random.SeedSequence) -> FoldResult:
    split_ss, resample_ss, train_ss = seed.spawn(3)
    labels = np.array([s.label for s in sequences], dtype=bool)
    train_idx = np.flatnonzero(fold_ids != fold)
    val_idx = np.flatnonzero(fold_ids == fold)

    inner_tr, inner_va = inner_split(labels[train_idx], config.inner_val_fraction, split_ss)
    fit_seqs = [sequences[i] for i in train_idx[inner_tr]]
    stop_seqs = [sequences[i] for i in train_idx[inner_va]]

    flat = [flatten(s, config.max_seq_len) for s in fit_seqs]
    balanced = resample(flat, config.smote_k, config.minority_ratio, config.majority_ratio, resample_ss)
    participants = frozenset(s.subject_id for s in flat) | frozenset(
        p for s in balanced for p in s.parents)
    train_arrays = to_arrays([unflatten(s) for s in balanced], config.max_seq_len)
    stop_arrays = to_arrays(stop_seqs, config.max_seq_len)

    tcfg = TrainConfig(**{**asdict(config.train), "seed": train_ss})
    params, history = train(train_arrays, stop_arrays, tcfg)

    Xv, Lv, yv = to_arrays([sequences[i] for i in val_idx], config.max_seq_len)
    scores = predict(params, Xv, Lv)
    both = 0 < yv.sum() < len(yv)
    return FoldResult(
        fold=fold, val_index=val_idx, scores=scores, n_train=len(train_idx), n_val=len(val_idx),
        n_resampled=len(balanced), resampling_ids=participants,
        auroc=auroc(scores, yv) if both else None,
        auprc=auprc(scores, yv) if yv.any() else None,
        brier=brier(scores, yv), selected_epoch=history.selected_epoch,
    )


def _run_fold_star(args):
    return run_fold(*args)


@dataclass
class MetricsReport:
    auroc: float
    auroc_ci: tuple[float, float]
    auprc: float
    auprc_ci: tuple[float, float]
    brier: float
    brier_ci: tuple[float, float]
    fold_ci: dict
    folds: list[FoldResult]
    oof_scores: np.ndarray
    labels: np.ndarray
    subject_ids: list[str]
    fold_ids: np.ndarray
    config: dict
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "n": int(len(self.labels)),
            "prevalence": float(np.mean(self.labels)),
            "auroc": self.auroc, "auroc_ci": list(self.auroc_ci),
            "auprc": self.auprc, "auprc_ci": list(self.auprc_ci),
            "brier": self.brier, "brier_ci": list(self.brier_ci),
            "fold_derived_ci": self.fold_ci,
            "folds": [f.row() for f in self.folds],
            "config": self.config,
            "master_seed": self.master_seed,
        }


def _fold_ci(values: list[float], level: float) -> list[float] | None:
    vals = [v for v in values if v is not None]
    if len(vals) < 2:
        return None
    m, sd = float(np.mean(vals)), float(np.std(vals, ddof=1))
    half = z_quantile((1 + level) / 2) * sd / math.sqrt(len(vals))
    return [max(0.0, m - half), m, min(1.0, m + half)]


def kfold_cv(sequences: Sequence[FeatureSequence], config: PipelineConfig | None = None,
             master_seed: int = 0, threads: int = 1) -> MetricsReport:
    """Stratified k-fold CV with pooled out-of-fold metrics and bootstrap CIs."""
    config = config or PipelineConfig()
    labels = np.array([s.label for s in sequences], dtype=bool)
    root = np.random.SeedSequence(master_seed)
    split_ss, boot_ss, *fold_ss = root.spawn(2 + config.folds)
    fold_ids = stratified_folds(labels, config.folds, split_ss)
    jobs = [(f, sequences, fold_ids, config, fold_ss[f]) for f in range(config.folds)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_fold_star, jobs))
    else:
        results = [run_fold(*job) for job in jobs]

    oof = np.empty(len(labels))
    for r in results:
        oof[r.val_index] = r.scores
    b1, b2, b3 = boot_ss.spawn(3)
    return MetricsReport(
        auroc=auroc(oof, labels),
        auroc_ci=bootstrap_ci(auroc, oof, labels, config.n_boot, config.level, b1),
        auprc=auprc(oof, labels),
        auprc_ci=bootstrap_ci(auprc, oof, labels, config.n_boot, config.level, b2),
        brier=brier(oof, labels),
        brier_ci=bootstrap_ci(brier, oof, labels, config.n_boot, config.level, b3),
        fold_ci={
            "auroc": _fold_ci([r.auroc for r in results], config.level),
            "auprc": _fold_ci([r.auprc for r in results], config.level),
            "brier": _fold_ci([r.brier for r in results], config.level),
        },
        folds=results,
        oof_scores=oof,
        labels=labels,
        subject_ids=[s.subject_id for s in sequences],
        fold_ids=fold_ids,
        config=config.to_dict(),
        master_seed=master_seed,
    )


def leakage_audit(report: MetricsReport) -> bool:
    """True when no validation sample took part in the resampling of its own fold."""
    ids = np.array(report.subject_ids)
    for r in report.folds:
        if r.resampling_ids & set(ids[r.val_index].tolist()):
            return False
    return True
