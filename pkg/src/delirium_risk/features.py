"""Per-admission feature sequences and class rebalancing (SMOTENC + downsampling).

Each admission becomes a 19-value step::

    age, gender (1=F), dx_count, 15 cumulative Charlson flags, cci

Sequences are cut before the first delirium admission, keep the most
recent ``max_seq_len`` steps and are pre-padded with zero rows.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cohort import CohortAssignment, CohortCriteria, code_matches
from .comorbidity import CONDITIONS, CharlsonMap, cci_score
from .ehr import Dataset

log = logging.getLogger(__name__)

FEATURE_NAMES = ("age", "gender", "dx_count", *CONDITIONS, "cci")
N_FEATURES = len(FEATURE_NAMES)
NOMINAL_FEATURES = np.array([1] + list(range(3, 3 + len(CONDITIONS))))
CONTINUOUS_FEATURES = np.array([0, 2, N_FEATURES - 1])
DEFAULT_MAX_SEQ_LEN = 8


@dataclass
class FeatureSequence:
    subject_id: str
    steps: np.ndarray  # (mask_len, N_FEATURES), chronological, real steps only
    label: bool

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=float).reshape(-1, N_FEATURES)
        if len(self.steps) == 0:
            raise ValueError(f"sequence {self.subject_id} has no steps")

    @property
    def mask_len(self) -> int:
        return len(self.steps)

    def padded(self, max_seq_len: int) -> np.ndarray:
        out = np.zeros((max_seq_len, N_FEATURES))
        steps = self.steps[-max_seq_len:]
        out[max_seq_len - len(steps):] = steps
        return out


def build_sequences(
    dataset: Dataset,
    assignments: Sequence[CohortAssignment],
    cmap: CharlsonMap,
    criteria: CohortCriteria,
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN,
) -> list[FeatureSequence]:
    """One sequence per included patient with pre-onset history."""
    if max_seq_len < 1:
        raise ValueError("max_seq_len must be >= 1")
    patients = dataset.by_id()
    out = []
    for a in assignments:
        if a.excluded:
            continue
        p = patients[a.subject_id]
        steps = []
        flags = dict.fromkeys(CONDITIONS, False)
        for adm in p.admissions:
            if any(code_matches(criteria.delirium, dx) for dx in adm.diagnoses):
                break
            for dx in adm.diagnoses:
                for name in CONDITIONS:
                    if not flags[name] and cmap.codesets[name].match(dx) is not None:
                        flags[name] = True
            steps.append([
                p.age_at(adm.admit_time),
                1.0 if p.gender == "F" else 0.0,
                adm.dx_count,
                *(float(flags[c]) for c in CONDITIONS),
                cci_score(flags, cmap.weights),
            ])
        if not steps:
            log.info("dropping %s: no admission before delirium onset", a.subject_id)
            continue
        out.append(FeatureSequence(a.subject_id, np.array(steps[-max_seq_len:]), a.has_delirium))
    return out


def nominal_positions(max_seq_len: int) -> np.ndarray:
    return (np.arange(max_seq_len)[:, None] * N_FEATURES + NOMINAL_FEATURES[None, :]).ravel()


def continuous_positions(max_seq_len: int) -> np.ndarray:
    return (np.arange(max_seq_len)[:, None] * N_FEATURES + CONTINUOUS_FEATURES[None, :]).ravel()


@dataclass
class FlatSample:
    vector: np.ndarray  # (max_seq_len * N_FEATURES,)
    label: bool
    mask_len: int
    subject_id: str = ""
    synthetic: bool = False
    parents: tuple[str, ...] = field(default=())

    @property
    def max_seq_len(self) -> int:
        return len(self.vector) // N_FEATURES

    @property
    def nominal_positions(self) -> np.ndarray:
        return nominal_positions(self.max_seq_len)


def flatten(seq: FeatureSequence, max_seq_len: int) -> FlatSample:
    if seq.mask_len > max_seq_len:
        raise ValueError(f"sequence {seq.subject_id} has {seq.mask_len} steps > max_seq_len {max_seq_len}")
    return FlatSample(seq.padded(max_seq_len).ravel(), bool(seq.label), seq.mask_len, seq.subject_id)


def unflatten(flat: FlatSample) -> FeatureSequence:
    if len(flat.vector) % N_FEATURES:
        raise ValueError(f"vector length {len(flat.vector)} is not a multiple of {N_FEATURES}")
    if not 1 <= flat.mask_len <= flat.max_seq_len:
        raise ValueError(f"mask_len {flat.mask_len} outside [1, {flat.max_seq_len}]")
    grid = flat.vector.reshape(flat.max_seq_len, N_FEATURES)
    return FeatureSequence(flat.subject_id, grid[flat.max_seq_len - flat.mask_len:].copy(), flat.label)


def to_arrays(seqs: Sequence[FeatureSequence], max_seq_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack into ``X (N, T, F)`` pre-padded, ``lengths (N,)`` and ``y (N,)``."""
    X = np.stack([s.padded(max_seq_len) for s in seqs]) if seqs else np.zeros((0, max_seq_len, N_FEATURES))
    lengths = np.array([min(s.mask_len, max_seq_len) for s in seqs], dtype=np.int64)
    y = np.array([float(s.label) for s in seqs])
    return X, lengths, y


def _split_classes(samples: Sequence[FlatSample]) -> tuple[bool, list[int], list[int]]:
    pos = [i for i, s in enumerate(samples) if s.label]
    neg = [i for i, s in enumerate(samples) if not s.label]
    if len(pos) <= len(neg):
        return True, pos, neg
    return False, neg, pos


def _step_mask(samples: Sequence[FlatSample], T: int) -> np.ndarray:
    lens = np.array([s.mask_len for s in samples])
    return np.arange(T)[None, :] >= (T - lens)[:, None]


def nominal_penalty(grid: np.ndarray, mask: np.ndarray) -> float:
    """Median over continuous slots of the per-slot standard deviation."""
    stds = []
    for t in range(grid.shape[1]):
        real = mask[:, t]
        if real.sum() < 2:
            continue
        stds.extend(grid[real, t][:, CONTINUOUS_FEATURES].std(axis=0).tolist())
    if not stds or float(np.median(stds)) == 0.0:
        warnings.warn("minority class has zero continuous variance; nominal penalty set to 0", RuntimeWarning)
        return 0.0
    return float(np.median(stds))


def mixed_distances(grid: np.ndarray, mask: np.ndarray, penalty: float) -> np.ndarray:
    """Pairwise SMOTENC distances over steps that are real in both samples.

    Squared continuous differences plus ``penalty**2`` per nominal mismatch,
    under one square root.
    """
    n, T, _ = grid.shape
    d2 = np.zeros((n, n))
    for t in range(T):
        both = mask[:, t][:, None] & mask[:, t][None, :]
        if not both.any():
            continue
        cont = grid[:, t][:, CONTINUOUS_FEATURES]
        sq = ((cont[:, None, :] - cont[None, :, :]) ** 2).sum(-1)
        nom = grid[:, t][:, NOMINAL_FEATURES]
        mism = (nom[:, None, :] != nom[None, :, :]).sum(-1)
        d2 += np.where(both, sq + penalty**2 * mism, 0.0)
    return np.sqrt(d2)


def smotenc(samples: Sequence[FlatSample], k: int = 5, target_minority_ratio: float = 1.0,
            rng_seed=0) -> list[FlatSample]:
    """Append synthetic minority samples until minority/majority reaches the target.

    Seeds are visited round-robin over a shuffled minority order. For every
    synthetic sample the draws are, in order: one neighbour index among the
    seed's k nearest, then the interpolation weight lambda ~ U(0, 1).
    Continuous slots interpolate seed -> neighbour (slots padded in the
    neighbour keep the seed value); nominal slots take the majority value
    among the k neighbours, ties going to the seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    samples = list(samples)
    if not samples:
        return []
    minority_label, mino, majo = _split_classes(samples)
    target = int(round(target_minority_ratio * len(majo)))
    n_new = max(0, target - len(mino))
    if n_new == 0:
        return samples
    if len(mino) < k + 1:
        raise ValueError(f"minority class has {len(mino)} samples; SMOTENC needs at least k+1 = {k + 1}")

    T = samples[0].max_seq_len
    minority = [samples[i] for i in mino]
    grid = np.stack([s.vector.reshape(T, N_FEATURES) for s in minority])
    mask = _step_mask(minority, T)
    dist = mixed_distances(grid, mask, nominal_penalty(grid, mask))
    np.fill_diagonal(dist, np.inf)
    neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(minority))
    out = list(samples)
    for j in range(n_new):
        s = int(order[j % len(order)])
        nbrs = neighbours[s]
        nb = int(nbrs[rng.integers(k)])
        lam = rng.random()
        new = np.zeros((T, N_FEATURES))
        real = mask[s]
        seed_g, nb_g = grid[s], grid[nb]
        interp = real & mask[nb]
        new[real] = seed_g[real]
        cont = seed_g[interp][:, CONTINUOUS_FEATURES] + lam * (
            nb_g[interp][:, CONTINUOUS_FEATURES] - seed_g[interp][:, CONTINUOUS_FEATURES])
        rows = np.flatnonzero(interp)
        new[np.ix_(rows, CONTINUOUS_FEATURES)] = cont
        for t in np.flatnonzero(real):
            voters = [grid[m, t, NOMINAL_FEATURES] for m in nbrs if mask[m, t]]
            if not voters:
                continue
            votes = np.array(voters)
            ones = votes.sum(axis=0)
            zeros = len(votes) - ones
            seed_vals = seed_g[t, NOMINAL_FEATURES]
            new[t, NOMINAL_FEATURES] = np.where(ones > zeros, 1.0, np.where(zeros > ones, 0.0, seed_vals))
        out.append(FlatSample(
            new.ravel(), minority_label, minority[s].mask_len, f"synthetic-{j}",
            synthetic=True, parents=(minority[s].subject_id, minority[nb].subject_id),
        ))
    return out


def downsample_majority(samples: Sequence[FlatSample], target_majority_ratio: float = 1.0,
                        rng_seed=0) -> list[FlatSample]:
    """Keep a uniform random subset of the larger class of size ratio * minority."""
    samples = list(samples)
    _, mino, majo = _split_classes(samples)
    keep = int(round(target_majority_ratio * len(mino)))
    if keep > len(majo):
        raise ValueError(f"cannot keep {keep} majority samples; only {len(majo)} exist")
    rng = np.random.default_rng(rng_seed)
    chosen = set(np.asarray(majo)[rng.choice(len(majo), size=keep, replace=False)].tolist()) if keep else set()
    mino_set = set(mino)
    return [s for i, s in enumerate(samples) if i in mino_set or i in chosen]


def resample(samples: Sequence[FlatSample], k: int = 5, minority_ratio: float = 0.5,
             majority_ratio: float = 1.0, seed=0) -> list[FlatSample]:
    """SMOTENC up to ``minority_ratio`` then downsample to ``majority_ratio``.

    With the defaults the result is balanced 1:1.
    """
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_smote, s_down = ss.spawn(2)
    _, mino, majo = _split_classes(samples)
    current = len(mino) / max(len(majo), 1)
    out = smotenc(samples, k, max(minority_ratio, current), s_smote) if minority_ratio > current else list(samples)
    return downsample_majority(out, majority_ratio, s_down)
