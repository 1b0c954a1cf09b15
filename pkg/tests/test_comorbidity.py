import itertools

import pytest
from hypothesis import given, strategies as st

from delirium_risk.comorbidity import (
    CHARLSON_WEIGHTS, CONDITIONS, HIERARCHY, MAX_CCI, CharlsonMap, cci_score, comorbidity_flags,
    load_charlson_map, profile,
)
from delirium_risk.ehr import DiagnosisCode, ICDVersion

ICD9, ICD10 = ICDVersion.ICD9, ICDVersion.ICD10

# spot checks against the published Quan ICD-9-CM / ICD-10 Charlson tables
QUAN = [
    ("I21", ICD10, "myocardial_infarction"), ("410", ICD9, "myocardial_infarction"),
    ("I252", ICD10, "myocardial_infarction"), ("412", ICD9, "myocardial_infarction"),
    ("I509", ICD10, "congestive_heart_failure"), ("4280", ICD9, "congestive_heart_failure"),
    ("I110", ICD10, "congestive_heart_failure"), ("40201", ICD9, "congestive_heart_failure"),
    ("I702", ICD10, "peripheral_vascular_disease"), ("4439", ICD9, "peripheral_vascular_disease"),
    ("I639", ICD10, "cerebrovascular_disease"), ("434", ICD9, "cerebrovascular_disease"),
    ("G459", ICD10, "cerebrovascular_disease"),
    ("J449", ICD10, "chronic_pulmonary_disease"), ("496", ICD9, "chronic_pulmonary_disease"),
    ("M069", ICD10, "rheumatic_disease"), ("7140", ICD9, "rheumatic_disease"),
    ("K254", ICD10, "peptic_ulcer_disease"), ("5319", ICD9, "peptic_ulcer_disease"),
    ("K703", ICD10, "mild_liver_disease"), ("5712", ICD9, "mild_liver_disease"),
    ("B182", ICD10, "mild_liver_disease"),
    ("E119", ICD10, "diabetes_without_cc"), ("25000", ICD9, "diabetes_without_cc"),
    ("E112", ICD10, "diabetes_with_cc"), ("25040", ICD9, "diabetes_with_cc"),
    ("G819", ICD10, "paraplegia"), ("3441", ICD9, "paraplegia"),
    ("N184", ICD10, "renal_disease"), ("585", ICD9, "renal_disease"),
    ("C50", ICD10, "malignant_cancer"), ("1749", ICD9, "malignant_cancer"),
    ("C20", ICD10, "malignant_cancer"), ("2040", ICD9, "malignant_cancer"),
    ("K721", ICD10, "severe_liver_disease"), ("4560", ICD9, "severe_liver_disease"),
    ("C7800", ICD10, "metastatic_solid_tumor"), ("1970", ICD9, "metastatic_solid_tumor"),
]


@pytest.mark.parametrize("code,version,condition", QUAN)
def test_quan_codes_map_to_one_condition(cmap, code, version, condition):
    flags = comorbidity_flags([DiagnosisCode(code, version)], cmap)
    assert [c for c, v in flags.items() if v] == [condition]


@pytest.mark.parametrize("code,version", [("I10", ICD10), ("4019", ICD9), ("F05", ICD10), ("Z7901", ICD10)])
def test_unmapped_codes(cmap, code, version):
    assert not any(comorbidity_flags([DiagnosisCode(code, version)], cmap).values())


def test_version_must_match(cmap):
    # "410" is an ICD-9 MI prefix; as ICD-10 it means nothing
    assert not any(comorbidity_flags([DiagnosisCode("410", ICD10)], cmap).values())


def test_empty_history(cmap):
    assert comorbidity_flags([], cmap) == dict.fromkeys(CONDITIONS, False)


def test_metastatic_and_malignant_both_flagged(cmap):
    f = comorbidity_flags([DiagnosisCode("C7800", ICD10), DiagnosisCode("C50", ICD10)], cmap)
    assert f["metastatic_solid_tumor"] and f["malignant_cancer"]
    assert cci_score(f) == 6


def test_map_has_both_versions_and_weights(cmap):
    assert dict(cmap.weights) == CHARLSON_WEIGHTS
    for name in CONDITIONS:
        assert {v for _, v in cmap.codesets[name].entries} == {ICD9, ICD10}


def test_map_validation():
    good = load_charlson_map()
    bad = dict(good.weights)
    bad["paraplegia"] = 4
    with pytest.raises(ValueError, match="weight"):
        CharlsonMap(good.codesets, bad)


def test_map_file_errors(tmp_path):
    f = tmp_path / "map.txt"
    f.write_text("myocardial_infarction,10,I21\n")
    with pytest.raises(ValueError, match="header"):
        load_charlson_map(f)
    with pytest.raises(FileNotFoundError):
        load_charlson_map(tmp_path / "absent.txt")


def flags_of(*names):
    return {c: c in names for c in CONDITIONS}


@pytest.mark.parametrize("names,expected", [
    ((), 0),
    (("myocardial_infarction", "metastatic_solid_tumor"), 7),
    (("diabetes_with_cc", "diabetes_without_cc", "renal_disease"), 4),
    (("mild_liver_disease", "severe_liver_disease"), 3),
    (("malignant_cancer",), 2),
    (tuple(CONDITIONS), MAX_CCI),
])
def test_cci_hand_sums(names, expected):
    assert cci_score(flags_of(*names)) == expected


def test_cci_age_points():
    assert cci_score(flags_of(), age=49) == 0
    assert cci_score(flags_of(), age=50) == 1
    assert cci_score(flags_of(), age=79) == 3
    assert cci_score(flags_of(), age=95) == 4


def test_max_cci_is_the_bound():
    best = max(cci_score(flags_of(*[c for c, on in zip(CONDITIONS, bits) if on]))
               for bits in itertools.product([0, 1], repeat=len(CONDITIONS)))
    assert best == MAX_CCI == 22
    assert best <= 25


@given(st.lists(st.booleans(), min_size=15, max_size=15), st.integers(0, 14))
def test_cci_monotone(bits, j):
    f = dict(zip(CONDITIONS, bits))
    g = dict(f)
    g[CONDITIONS[j]] = True
    assert cci_score(g) >= cci_score(f)
    assert 0 <= cci_score(f) <= MAX_CCI


def test_hierarchy_pairs_are_known():
    for low, high in HIERARCHY:
        assert CHARLSON_WEIGHTS[high] > CHARLSON_WEIGHTS[low]


@given(st.lists(st.sampled_from([c for c, _, _ in QUAN]), max_size=6))
def test_flags_idempotent_under_duplication(codes):
    cm = load_charlson_map()
    version = {c: v for c, v, _ in QUAN}
    history = [DiagnosisCode(c, version[c]) for c in codes]
    assert comorbidity_flags(history + history, cm) == comorbidity_flags(history, cm)


def test_profile_row(cmap):
    p = profile([DiagnosisCode("I21", ICD10), DiagnosisCode("N184", ICD10)], cmap)
    row = p.as_row()
    assert len(row) == 16 and row[-1] == 3
    assert row[CONDITIONS.index("renal_disease")] == 1
