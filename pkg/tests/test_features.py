import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delirium_risk.cohort import build_cohort
from delirium_risk.comorbidity import CONDITIONS, cci_score
from delirium_risk.features import (
    CONTINUOUS_FEATURES, FEATURE_NAMES, N_FEATURES, NOMINAL_FEATURES, FeatureSequence, FlatSample,
    build_sequences, downsample_majority, flatten, nominal_penalty, nominal_positions, resample, smotenc,
    to_arrays, unflatten,
)

from conftest import adm, dataset, patient

AGE, GENDER, DX = 0, 1, 2
MI = 3 + CONDITIONS.index("myocardial_infarction")


def build(criteria, cmap, *patients, max_seq_len=8):
    ds = dataset(*patients)
    return build_sequences(ds, build_cohort(ds, criteria), cmap, criteria, max_seq_len)


def test_layout():
    assert N_FEATURES == 19 and FEATURE_NAMES[-1] == "cci"
    assert len(NOMINAL_FEATURES) == 16 and len(CONTINUOUS_FEATURES) == 3
    assert sorted([*NOMINAL_FEATURES, *CONTINUOUS_FEATURES]) == list(range(19))


def test_truncation_before_delirium(criteria, cmap):
    seqs = build(criteria, cmap, patient(1, adm(1, "2014-01-01", ["I21"]), adm(2, "2015-01-01", []),
                                         adm(3, "2016-01-01", ["F05"])))
    assert len(seqs) == 1 and seqs[0].mask_len == 2 and seqs[0].label


def test_single_clean_admission(criteria, cmap):
    (s,) = build(criteria, cmap, patient(1, adm(1, "2014-01-01", ["I10"]), gender="M", age=70))
    assert s.mask_len == 1 and not s.label
    assert s.steps[0, AGE] == 70 and s.steps[0, GENDER] == 0.0


def test_delirium_only_admission_dropped(criteria, cmap, caplog):
    with caplog.at_level("INFO"):
        seqs = build(criteria, cmap, patient(1, adm(1, "2014-01-01", ["F05"])))
    assert seqs == [] and "no admission before delirium onset" in caplog.text


def test_dx_count_dedup(criteria, cmap):
    (s,) = build(criteria, cmap, patient(1, adm(1, "2014-01-01", ["I21", "I21", "E119"])))
    assert s.steps[0, DX] == 2


def test_cumulative_flags_and_cci(criteria, cmap):
    (s,) = build(criteria, cmap, patient(
        1, adm(1, "2014-01-01", ["I21"]), adm(2, "2015-06-01", ["N184"]), adm(3, "2016-01-01", [])))
    flags = s.steps[:, 3:3 + len(CONDITIONS)]
    assert np.all(np.diff(flags, axis=0) >= 0)
    assert s.steps[2, MI] == 1
    for row in s.steps:
        assert row[-1] == cci_score(dict(zip(CONDITIONS, row[3:-1].astype(bool))))
    assert s.steps[:, AGE].tolist() == [75, 76, 77]


def test_excluded_and_keep_last(criteria, cmap):
    adms = [adm(i, f"{2000 + i}-01-01", []) for i in range(12)]
    seqs = build(criteria, cmap, patient(1, *adms), patient(2, adm(1, "2014-01-01", ["G30"])), max_seq_len=8)
    assert [s.subject_id for s in seqs] == ["1"]
    assert seqs[0].mask_len == 8 and seqs[0].steps[-1, AGE] == 75 + 11


def test_flatten_prepadding():
    seq = FeatureSequence("a", np.arange(19, dtype=float), False)
    flat = flatten(seq, 2)
    assert len(flat.vector) == 38
    assert np.all(flat.vector[:19] == 0) and np.array_equal(flat.vector[19:], np.arange(19))
    assert len(nominal_positions(8)) == 16 * 8
    assert len(flat.nominal_positions) == 32


def seq_strategy(max_len=5):
    return st.integers(1, max_len).flatmap(lambda n: st.lists(
        st.floats(0, 100, allow_nan=False), min_size=n * N_FEATURES, max_size=n * N_FEATURES))


@given(seq_strategy(), st.booleans())
def test_flatten_round_trip(values, label):
    seq = FeatureSequence("x", np.array(values), label)
    back = unflatten(flatten(seq, 5))
    assert np.array_equal(back.steps, seq.steps) and back.label == label
    X, lengths, y = to_arrays([seq], 5)
    assert X.shape == (1, 5, N_FEATURES) and lengths[0] == seq.mask_len


def test_flatten_errors():
    with pytest.raises(ValueError):
        flatten(FeatureSequence("a", np.zeros((3, N_FEATURES)), False), 2)
    with pytest.raises(ValueError):
        unflatten(FlatSample(np.zeros(20), False, 1))
    with pytest.raises(ValueError):
        FeatureSequence("a", np.zeros((0, N_FEATURES)), False)


def flat(label, T=2, steps=1, sid="", rng=None, **slots):
    grid = np.zeros((T, N_FEATURES))
    for t in range(T - steps, T):
        if rng is not None:
            grid[t, CONTINUOUS_FEATURES] = rng.uniform(60, 90, 3)
            grid[t, NOMINAL_FEATURES] = rng.integers(0, 2, 16)
        for j, v in slots.items():
            grid[t, int(j[1:])] = v
    return FlatSample(grid.ravel(), label, steps, sid)


def random_set(seed, n_pos, n_neg, T=3):
    rng = np.random.default_rng(seed)
    out = [flat(True, T, int(rng.integers(1, T + 1)), f"p{i}", rng) for i in range(n_pos)]
    out += [flat(False, T, int(rng.integers(1, T + 1)), f"n{i}", rng) for i in range(n_neg)]
    return out


def test_lambda_replay_oracle():
    # two minority samples with age 0 and 1; k=1 makes each the other's only neighbour
    samples = [flat(True, 1, sid="a", s0=0.0, s2=5, s18=1), flat(True, 1, sid="b", s0=1.0, s2=7, s18=3)]
    samples += [flat(False, 1, sid=f"n{i}", s0=50) for i in range(4)]
    out = smotenc(samples, k=1, target_minority_ratio=1.0, rng_seed=123)
    synth = [s for s in out if s.synthetic]
    assert len(synth) == 2
    rng = np.random.default_rng(123)
    order = rng.permutation(2)
    for j, s in enumerate(synth):
        seed = int(order[j % 2])
        assert rng.integers(1) == 0
        lam = rng.random()
        expected = lam if seed == 0 else 1 - lam
        assert s.vector[0] == pytest.approx(expected, abs=1e-15)
        assert 0.0 <= s.vector[0] <= 1.0
        assert s.parents == (("a", "b") if seed == 0 else ("b", "a"))


def test_majority_vote():
    vals = [0, 1, 1, 0]
    samples = [flat(True, 1, sid=f"p{i}", **{f"s{MI}": v, "s0": i, "s2": i, "s18": i})
               for i, v in enumerate(vals)]
    samples += [flat(False, 1, sid=f"n{i}") for i in range(8)]
    out = smotenc(samples, k=3, target_minority_ratio=1.0, rng_seed=0)
    for s in out:
        if s.synthetic:
            # p0 and p3 see {1,1,0}; p1 and p2 see {0,1,0}
            expected = {"p0": 1, "p3": 1, "p1": 0, "p2": 0}[s.parents[0]]
            assert s.vector[MI] == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 15), st.integers(20, 40), st.integers(1, 5))
def test_smotenc_envelope_and_categories(seed, n_pos, n_neg, k):
    samples = random_set(seed, n_pos, n_neg)
    out = smotenc(samples, k=k, target_minority_ratio=1.0, rng_seed=seed)
    assert sum(s.label for s in out) == pytest.approx(n_neg, abs=1)
    T = 3
    mino = np.stack([s.vector.reshape(T, N_FEATURES) for s in samples if s.label])
    mino_mask = np.stack([np.arange(T) >= T - s.mask_len for s in samples if s.label])
    for s in out:
        if not s.synthetic:
            continue
        g = s.vector.reshape(T, N_FEATURES)
        for t in range(T - s.mask_len, T):
            real = mino[mino_mask[:, t], t]
            assert np.all(g[t, CONTINUOUS_FEATURES] >= real[:, CONTINUOUS_FEATURES].min(0) - 1e-12)
            assert np.all(g[t, CONTINUOUS_FEATURES] <= real[:, CONTINUOUS_FEATURES].max(0) + 1e-12)
            for j in NOMINAL_FEATURES:
                assert g[t, j] in set(real[:, j].tolist())
        assert np.all(g[:T - s.mask_len] == 0)


def test_smotenc_needs_k_plus_one():
    samples = random_set(0, 3, 20)
    with pytest.raises(ValueError, match="k\\+1"):
        smotenc(samples, k=3)
    with pytest.raises(ValueError):
        smotenc(samples, k=0)


def test_smotenc_no_op_when_balanced():
    samples = random_set(1, 10, 10)
    assert smotenc(samples, k=3, target_minority_ratio=1.0) == samples


def test_zero_variance_penalty_warns():
    grid = np.zeros((4, 1, N_FEATURES))
    mask = np.ones((4, 1), dtype=bool)
    with pytest.warns(RuntimeWarning, match="zero continuous variance"):
        assert nominal_penalty(grid, mask) == 0.0


def test_downsample_ratio_and_determinism():
    samples = random_set(2, 100, 900, T=1)
    a = downsample_majority(samples, 1.0, rng_seed=5)
    b = downsample_majority(samples, 1.0, rng_seed=5)
    assert sum(not s.label for s in a) == 100 and sum(s.label for s in a) == 100
    assert [s.subject_id for s in a] == [s.subject_id for s in b]
    with pytest.raises(ValueError):
        downsample_majority(samples, 10.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 30), st.integers(40, 120))
def test_resample_balanced(seed, n_pos, n_neg):
    samples = random_set(seed, n_pos, n_neg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = resample(samples, seed=seed)
    pos = sum(s.label for s in out)
    assert abs(pos - (len(out) - pos)) <= 1
    assert sum(1 for s in out if s.label and not s.synthetic) == n_pos
    assert [s.vector.tolist() for s in resample(samples, seed=seed)] == [s.vector.tolist() for s in out]
