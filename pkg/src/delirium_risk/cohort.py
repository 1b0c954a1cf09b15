"""ICD-prefix cohort selection: exclusion, MCI and delirium labelling."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .ehr import Dataset, DiagnosisCode, ICDVersion, Patient, normalize_icd

DEFAULT_MIN_AGE = 65


@dataclass(frozen=True)
class CodeSet:
    """Named set of (prefix, version) entries with exact-code carve-outs."""

    name: str
    entries: tuple[tuple[str, ICDVersion], ...]
    carve_outs: tuple[tuple[str, ICDVersion], ...] = ()

    def __post_init__(self):
        for code, _ in self.entries + self.carve_outs:
            if code != code.upper() or "." in code or not code.isalnum():
                raise ValueError(f"{self.name}: entry {code!r} is not normalized")
        if len(set(self.carve_outs)) != len(self.carve_outs):
            raise ValueError(f"{self.name}: duplicate carve-outs")
        object.__setattr__(self, "_carved", frozenset((c, int(v)) for c, v in self.carve_outs))

    def match(self, dx: DiagnosisCode) -> tuple[str, ICDVersion] | None:
        """Return the first entry matching ``dx`` or None."""
        if (dx.code, int(dx.version)) in self._carved:
            return None
        for prefix, version in self.entries:
            if version == dx.version and dx.code.startswith(prefix):
                return prefix, version
        return None


def code_matches(codeset: CodeSet, dx: DiagnosisCode) -> bool:
    return codeset.match(dx) is not None


@dataclass(frozen=True)
class CohortCriteria:
    exclusion: CodeSet
    mci: CodeSet
    delirium: CodeSet
    min_age: int | None = DEFAULT_MIN_AGE


@dataclass(frozen=True)
class CohortAssignment:
    subject_id: str
    excluded: bool
    exclusion_reasons: tuple[str, ...]
    is_mci: bool
    has_delirium: bool
    first_delirium_time: dt.date | None
    index_admission_time: dt.date | None
    last_discharge_time: dt.date | None

    @property
    def included(self) -> bool:
        return not self.excluded


def parse_rules(lines: Iterable[str], source: str = "<rules>") -> dict[str, CodeSet]:
    """Parse ``SETNAME,VERSION,PREFIX[,carveout]`` lines into code sets."""
    entries: dict[str, list] = {}
    carve: dict[str, list] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3].lower() != "carveout"):
            raise ValueError(f"{source}:{lineno}: expected SETNAME,VERSION,PREFIX[,carveout]")
        name, version = parts[0].lower(), ICDVersion.parse(parts[1])
        code = normalize_icd(parts[2], version)
        entries.setdefault(name, [])
        target = carve if len(parts) == 4 else entries
        target.setdefault(name, []).append((code, version))
    return {
        name: CodeSet(name, tuple(entries.get(name, ())), tuple(carve.get(name, ())))
        for name in sorted(set(entries) | set(carve))
    }


def load_criteria(path=None, min_age: int | None = DEFAULT_MIN_AGE) -> CohortCriteria:
    """Load criteria from a rules file; ``None`` loads the shipped defaults."""
    if path is None:
        text = resources.files("delirium_risk").joinpath("data/cohort_rules.txt").read_text()
        source = "cohort_rules.txt"
    else:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"missing criteria file: {path}")
        text, source = path.read_text(), str(path)
    sets = parse_rules(text.splitlines(), source)
    missing = {"exclusion", "mci", "delirium"} - set(sets)
    if missing:
        raise ValueError(f"{source}: missing code set(s) {sorted(missing)}")
    return CohortCriteria(sets["exclusion"], sets["mci"], sets["delirium"], min_age)


def _reason(entry: tuple[str, ICDVersion]) -> str:
    return f"{entry[0]}(ICD{int(entry[1])})"


def assign_patient(patient: Patient, criteria: CohortCriteria) -> CohortAssignment:
    if not patient.admissions:
        return CohortAssignment(patient.subject_id, True, ("no-admissions",), False, False, None, None, None)
    reasons: set[str] = set()
    is_mci = False
    first_delirium = None
    for adm in patient.admissions:
        for dx in adm.diagnoses:
            hit = criteria.exclusion.match(dx)
            if hit is not None:
                reasons.add(_reason(hit))
            is_mci = is_mci or code_matches(criteria.mci, dx)
            if first_delirium is None and code_matches(criteria.delirium, dx):
                first_delirium = adm.admit_time
    index_time = patient.admissions[0].admit_time
    if criteria.min_age is not None and patient.age_at(index_time) < criteria.min_age:
        reasons.add("age")
    return CohortAssignment(
        subject_id=patient.subject_id,
        excluded=bool(reasons),
        exclusion_reasons=tuple(sorted(reasons)),
        is_mci=is_mci,
        has_delirium=first_delirium is not None,
        first_delirium_time=first_delirium,
        index_admission_time=index_time,
        last_discharge_time=max(a.discharge_time for a in patient.admissions),
    )


def build_cohort(dataset: Dataset, criteria: CohortCriteria) -> list[CohortAssignment]:
    """One assignment per patient, ordered like ``dataset.patients``."""
    return [assign_patient(p, criteria) for p in dataset.patients]


def cohort_flow(assignments: Sequence[CohortAssignment]) -> dict:
    """Selection-flow counts: total, excluded, and MCI / non-MCI splits."""
    inc = [a for a in assignments if a.included]
    mci = [a for a in inc if a.is_mci]
    non = [a for a in inc if not a.is_mci]
    return {
        "total": len(assignments),
        "excluded": len(assignments) - len(inc),
        "non_mci": {"n": len(non), "delirium": sum(a.has_delirium for a in non)},
        "mci": {"n": len(mci), "delirium": sum(a.has_delirium for a in mci)},
    }


def _median(values: Sequence[float]) -> float:
    n = len(values)
    mid = n // 2
    return float(values[mid]) if n % 2 else (values[mid - 1] + values[mid]) / 2


def quartiles(values: Iterable[float]) -> tuple[float, float, float]:
    """(Q1, median, Q3) by the inclusive halves method.

    Q1 and Q3 are medians of the lower and upper halves; for odd n the
    median belongs to both halves. Ages {70, 72, 74, 76} give (71, 73, 75).
    """
    xs = sorted(values)
    n = len(xs)
    if n == 0:
        raise ValueError("quartiles of an empty sample")
    if n == 1:
        return (float(xs[0]),) * 3
    half = (n + 1) // 2
    return _median(xs[:half]), _median(xs), _median(xs[n - half:])


def _pct(k: int, n: int) -> float:
    return round(100.0 * k / n, 2) if n else math.nan


def cohort_summary(assignments: Sequence[CohortAssignment], dataset: Dataset) -> dict:
    """Demographics table (Total / No MCI / MCI) over included patients."""
    patients = dataset.by_id()
    inc = [a for a in assignments if a.included]
    if not inc:
        return {"empty_cohort": True, "rows": []}
    groups = {
        "Total": inc,
        "No MCI": [a for a in inc if not a.is_mci],
        "MCI": [a for a in inc if a.is_mci],
    }
    rows = []
    for label, members in groups.items():
        ages = [patients[a.subject_id].age_at(a.index_admission_time) for a in members]
        males = sum(patients[a.subject_id].gender == "M" for a in members)
        n = len(members)
        row = {"group": label, "n": n, "pct": _pct(n, len(inc))}
        if ages:
            q1, med, q3 = quartiles(ages)
            row.update(median_age=med, iqr_lo=q1, iqr_hi=q3)
        else:
            row.update(median_age=None, iqr_lo=None, iqr_hi=None)
        row.update(
            male=males, male_pct=_pct(males, n) if n else 0.0,
            female=n - males, female_pct=_pct(n - males, n) if n else 0.0,
        )
        rows.append(row)
    return {"empty_cohort": False, "rows": rows}


def format_summary(summary: dict) -> str:
    """Plain-text rendering of :func:`cohort_summary`."""
    if summary["empty_cohort"]:
        return "empty cohort: no included patients\n"
    out = [f"{'':18s}" + "".join(f"{r['group']:>24s}" for r in summary["rows"])]
    out.append(f"{'n (%)':18s}" + "".join(f"{r['n']:>14d} ({r['pct']:.2f}%)".rjust(24) for r in summary["rows"]))

    def age(r):
        if r["median_age"] is None:
            return "-"
        return f"{r['median_age']:g} ({r['iqr_lo']:g}-{r['iqr_hi']:g})"

    out.append(f"{'Age (IQR), years':18s}" + "".join(age(r).rjust(24) for r in summary["rows"]))
    out.append(f"{'Male':18s}" + "".join(f"{r['male']} ({r['male_pct']:.2f}%)".rjust(24) for r in summary["rows"]))
    out.append(f"{'Female':18s}" + "".join(f"{r['female']} ({r['female_pct']:.2f}%)".rjust(24) for r in summary["rows"]))
    return "\n".join(out) + "\n"
