"""Charlson comorbidity flags and index from ICD codes."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .cohort import CodeSet
from .ehr import DiagnosisCode, ICDVersion, normalize_icd

CONDITIONS = (
    "myocardial_infarction",
    "congestive_heart_failure",
    "peripheral_vascular_disease",
    "cerebrovascular_disease",
    "chronic_pulmonary_disease",
    "rheumatic_disease",
    "peptic_ulcer_disease",
    "mild_liver_disease",
    "diabetes_without_cc",
    "diabetes_with_cc",
    "paraplegia",
    "renal_disease",
    "malignant_cancer",
    "severe_liver_disease",
    "metastatic_solid_tumor",
)

CHARLSON_WEIGHTS = {
    "myocardial_infarction": 1,
    "congestive_heart_failure": 1,
    "peripheral_vascular_disease": 1,
    "cerebrovascular_disease": 1,
    "chronic_pulmonary_disease": 1,
    "rheumatic_disease": 1,
    "peptic_ulcer_disease": 1,
    "mild_liver_disease": 1,
    "diabetes_without_cc": 1,
    "diabetes_with_cc": 2,
    "paraplegia": 2,
    "renal_disease": 2,
    "malignant_cancer": 2,
    "severe_liver_disease": 3,
    "metastatic_solid_tumor": 6,
}

# (suppressed, dominant): the suppressed weight drops when both are present
HIERARCHY = (
    ("mild_liver_disease", "severe_liver_disease"),
    ("diabetes_without_cc", "diabetes_with_cc"),
    ("malignant_cancer", "metastatic_solid_tumor"),
)

# all 15 conditions present, hierarchy applied: 26 - 1 - 1 - 2
MAX_CCI = 22


@dataclass(frozen=True)
class CharlsonMap:
    codesets: Mapping[str, CodeSet]
    weights: Mapping[str, int]

    def __post_init__(self):
        if set(self.codesets) != set(CONDITIONS) or set(self.weights) != set(CONDITIONS):
            raise ValueError("Charlson map must define exactly the 15 profile conditions")
        for name in CONDITIONS:
            if self.weights[name] not in (1, 2, 3, 6):
                raise ValueError(f"{name}: weight {self.weights[name]} not in {{1,2,3,6}}")
            versions = {v for _, v in self.codesets[name].entries}
            if versions != {ICDVersion.ICD9, ICDVersion.ICD10}:
                raise ValueError(f"{name}: needs entries for both ICD versions")


def load_charlson_map(path=None) -> CharlsonMap:
    """Parse a Charlson map file (``[condition],weight`` headers + rule lines)."""
    if path is None:
        text = resources.files("delirium_risk").joinpath("data/charlson_quan.txt").read_text()
        source = "charlson_quan.txt"
    else:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"missing Charlson map file: {path}")
        text, source = path.read_text(), str(path)
    weights: dict[str, int] = {}
    entries: dict[str, list] = {}
    carve: dict[str, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[0].startswith("["):
            if len(parts) != 2 or not parts[0].endswith("]"):
                raise ValueError(f"{source}:{lineno}: expected [condition],weight")
            weights[parts[0][1:-1]] = int(parts[1])
            continue
        if len(parts) not in (3, 4):
            raise ValueError(f"{source}:{lineno}: expected condition,VERSION,PREFIX[,carveout]")
        name, version = parts[0], ICDVersion.parse(parts[1])
        if name not in weights:
            raise ValueError(f"{source}:{lineno}: entry for {name} before its header line")
        target = carve if len(parts) == 4 else entries
        target.setdefault(name, []).append((normalize_icd(parts[2], version), version))
    codesets = {
        name: CodeSet(name, tuple(entries.get(name, ())), tuple(carve.get(name, ())))
        for name in weights
    }
    return CharlsonMap(codesets, weights)


def comorbidity_flags(history: Iterable[DiagnosisCode], cmap: CharlsonMap) -> dict[str, bool]:
    """Condition -> present, for every condition in :data:`CONDITIONS`.

    Both members of a hierarchy pair stay flagged; suppression happens
    only in :func:`cci_score`.
    """
    flags = dict.fromkeys(CONDITIONS, False)
    for dx in set(history):
        for name in CONDITIONS:
            if not flags[name] and cmap.codesets[name].match(dx) is not None:
                flags[name] = True
    return flags


def cci_score(flags: Mapping[str, bool], weights: Mapping[str, int] = CHARLSON_WEIGHTS,
              age: float | None = None) -> int:
    """Charlson index with hierarchy suppression.

    Pass ``age`` to add the age points (1 per decade from 50); by default
    the index carries no age component.
    """
    active = {name for name in CONDITIONS if flags.get(name)}
    for low, high in HIERARCHY:
        if high in active:
            active.discard(low)
    score = sum(weights[name] for name in active)
    if age is not None and age >= 50:
        score += min(int((age - 40) // 10), 4)
    return score


@dataclass(frozen=True)
class ComorbidityProfile:
    flags: Mapping[str, bool]
    cci: int

    def as_row(self) -> list[int]:
        return [int(self.flags[name]) for name in CONDITIONS] + [self.cci]


def profile(history: Iterable[DiagnosisCode], cmap: CharlsonMap) -> ComorbidityProfile:
    flags = comorbidity_flags(history, cmap)
    return ComorbidityProfile(flags, cci_score(flags, cmap.weights))
