"""Longitudinal EHR data model and three-table CSV ingestion.

Input files mirror the public patients / admissions / diagnoses tables:

    patients.csv    subject_id,gender,anchor_age
    admissions.csv  subject_id,hadm_id,admittime,dischtime
    diagnoses.csv   subject_id,hadm_id,seq_num,icd_code,icd_version

Timestamps are ``YYYY-MM-DD`` with an optional ``HH:MM:SS`` part and are
kept at day precision. Lines starting with ``#`` are provenance comments
and are skipped.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator


class EHRError(ValueError):
    """Raised for malformed or inconsistent EHR input."""


class ICDVersion(enum.IntEnum):
    ICD9 = 9
    ICD10 = 10

    @classmethod
    def parse(cls, value: "str | int | ICDVersion") -> "ICDVersion":
        if isinstance(value, ICDVersion):
            return value
        text = str(value).strip().upper().replace("-", "")
        if text in ("9", "ICD9"):
            return cls.ICD9
        if text in ("10", "ICD10"):
            return cls.ICD10
        raise EHRError(f"unsupported ICD version {value!r}")


PATIENT_COLUMNS = ("subject_id", "gender", "anchor_age")
ADMISSION_COLUMNS = ("subject_id", "hadm_id", "admittime", "dischtime")
DIAGNOSIS_COLUMNS = ("subject_id", "hadm_id", "seq_num", "icd_code", "icd_version")


def normalize_icd(raw: str, version: "ICDVersion | str | int" = ICDVersion.ICD10) -> str:
    """Uppercase, trim and strip dots: ``"331.83" -> "33183"``.

    ``version`` is validated but does not change the result.
    """
    ICDVersion.parse(version)
    code = (raw or "").strip().upper().replace(".", "")
    if not code:
        raise EHRError(f"malformed ICD code {raw!r}: empty after normalization")
    if not code.isalnum() or not code.isascii():
        raise EHRError(f"malformed ICD code {raw!r}")
    return code


@dataclass(frozen=True, order=True)
class DiagnosisCode:
    code: str
    version: ICDVersion
    seq_num: int = field(default=1, compare=False)

    def __post_init__(self):
        if not self.code or not self.code.isalnum() or self.code != self.code.upper():
            raise EHRError(f"diagnosis code {self.code!r} is not normalized")
        object.__setattr__(self, "version", ICDVersion.parse(self.version))
        if self.seq_num < 1:
            raise EHRError(f"seq_num must be positive, got {self.seq_num}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.code, int(self.version))


@dataclass(frozen=True)
class Admission:
    hadm_id: str
    admit_time: dt.date
    discharge_time: dt.date
    diagnoses: tuple[DiagnosisCode, ...] = ()

    def __post_init__(self):
        if self.discharge_time < self.admit_time:
            raise EHRError(f"admission {self.hadm_id}: discharge before admit")
        # dedup on (code, version); keep the lowest seq_num
        best: dict[tuple[str, int], DiagnosisCode] = {}
        for dx in self.diagnoses:
            prev = best.get(dx.key)
            if prev is None or dx.seq_num < prev.seq_num:
                best[dx.key] = dx
        ordered = tuple(sorted(best.values(), key=lambda d: (d.seq_num, d.key)))
        object.__setattr__(self, "diagnoses", ordered)

    @property
    def dx_count(self) -> int:
        return len(self.diagnoses)

    def codes(self) -> frozenset[tuple[str, int]]:
        return frozenset(dx.key for dx in self.diagnoses)


@dataclass(frozen=True)
class Patient:
    subject_id: str
    gender: str
    anchor_age: int
    admissions: tuple[Admission, ...] = ()

    def __post_init__(self):
        if self.gender not in ("M", "F"):
            raise EHRError(f"patient {self.subject_id}: gender must be M or F, got {self.gender!r}")
        if self.anchor_age < 0:
            raise EHRError(f"patient {self.subject_id}: negative anchor_age")
        adms = tuple(sorted(self.admissions, key=lambda a: (a.admit_time, a.hadm_id)))
        object.__setattr__(self, "admissions", adms)

    def age_at(self, when: dt.date) -> int:
        """anchor_age + whole years elapsed since the first admission."""
        if not self.admissions:
            return self.anchor_age
        first = self.admissions[0].admit_time
        years = (when.year - first.year) - ((when.month, when.day) < (first.month, first.day))
        return self.anchor_age + max(years, 0)

    def history(self) -> list[DiagnosisCode]:
        return [dx for adm in self.admissions for dx in adm.diagnoses]


@dataclass(frozen=True)
class Dataset:
    patients: tuple[Patient, ...]
    provenance: str = ""

    def __post_init__(self):
        pts = tuple(sorted(self.patients, key=lambda p: _id_key(p.subject_id)))
        seen = set()
        for p in pts:
            if p.subject_id in seen:
                raise EHRError(f"duplicate subject_id {p.subject_id}")
            seen.add(p.subject_id)
        object.__setattr__(self, "patients", pts)

    def __len__(self) -> int:
        return len(self.patients)

    def __iter__(self) -> Iterator[Patient]:
        return iter(self.patients)

    def by_id(self) -> dict[str, Patient]:
        return {p.subject_id: p for p in self.patients}

    def __eq__(self, other):
        # provenance is descriptive only
        return isinstance(other, Dataset) and self.patients == other.patients

    __hash__ = None


def _id_key(value: str):
    return (0, int(value), value) if value.isdigit() else (1, 0, value)


def parse_timestamp(text: str) -> dt.date:
    text = text.strip()
    try:
        if len(text) > 10:
            return dt.datetime.strptime(text, "%Y-%m-%d %H:%M:%S").date()
        return dt.datetime.strptime(text, "%Y-%m-%d").date()
    except ValueError:
        raise EHRError(f"unparseable timestamp {text!r}") from None


def _read_table(path: "str | os.PathLike", columns: tuple[str, ...]) -> list[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing input file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#") and ln.strip())
        reader = csv.DictReader(lines)
        header = tuple(reader.fieldnames or ())
        unknown = [c for c in header if c not in columns]
        missing = [c for c in columns if c not in header]
        if unknown:
            raise EHRError(f"{path}: unknown column(s) {unknown}")
        if missing:
            raise EHRError(f"{path}: missing column(s) {missing}")
        return [{k: (v or "").strip() for k, v in row.items()} for row in reader]


def _int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise EHRError(f"{what}: expected integer, got {value!r}") from None


def load_dataset(patients_path, admissions_path, diagnoses_path, provenance: str | None = None) -> Dataset:
    """Load and validate the three input tables into a :class:`Dataset`."""
    prow = _read_table(patients_path, PATIENT_COLUMNS)
    arow = _read_table(admissions_path, ADMISSION_COLUMNS)
    drow = _read_table(diagnoses_path, DIAGNOSIS_COLUMNS)

    demo: dict[str, tuple[str, int]] = {}
    for r in prow:
        sid = r["subject_id"]
        if sid in demo:
            raise EHRError(f"duplicate subject_id {sid} in patients file")
        demo[sid] = (r["gender"].upper(), _int(r["anchor_age"], f"patient {sid} anchor_age"))

    adm_meta: dict[str, tuple[str, dt.date, dt.date]] = {}
    for r in arow:
        sid, hid = r["subject_id"], r["hadm_id"]
        if sid not in demo:
            raise EHRError(f"admission {hid} references unknown subject_id {sid}")
        if hid in adm_meta:
            raise EHRError(f"duplicate hadm_id {hid}")
        adm_meta[hid] = (sid, parse_timestamp(r["admittime"]), parse_timestamp(r["dischtime"]))

    dx_by_adm: dict[str, list[DiagnosisCode]] = {h: [] for h in adm_meta}
    for r in drow:
        hid = r["hadm_id"]
        if hid not in adm_meta:
            raise EHRError(f"diagnosis references unknown hadm_id {hid}")
        if adm_meta[hid][0] != r["subject_id"]:
            raise EHRError(f"diagnosis for hadm_id {hid} has mismatched subject_id {r['subject_id']}")
        version = ICDVersion.parse(r["icd_version"])
        code = normalize_icd(r["icd_code"], version)
        dx_by_adm[hid].append(DiagnosisCode(code, version, _int(r["seq_num"], f"hadm {hid} seq_num")))

    adms_by_pt: dict[str, list[Admission]] = {s: [] for s in demo}
    for hid, (sid, t0, t1) in adm_meta.items():
        adms_by_pt[sid].append(Admission(hid, t0, t1, tuple(dx_by_adm[hid])))

    patients = [Patient(sid, g, age, tuple(adms_by_pt[sid])) for sid, (g, age) in demo.items()]
    if provenance is None:
        provenance = f"loaded from {Path(patients_path).parent}"
    return Dataset(tuple(patients), provenance)


def _fmt_date(d: dt.date) -> str:
    return d.isoformat()


def write_dataset(dataset: Dataset, out_dir, header_comment: str | None = None) -> dict[str, Path]:
    """Write ``dataset`` as patients.csv / admissions.csv / diagnoses.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("patients", "admissions", "diagnoses")}

    with _open_csv(paths["patients"], header_comment) as w:
        w.writerow(PATIENT_COLUMNS)
        for p in dataset.patients:
            w.writerow((p.subject_id, p.gender, p.anchor_age))
    with _open_csv(paths["admissions"], header_comment) as w:
        w.writerow(ADMISSION_COLUMNS)
        for p in dataset.patients:
            for a in p.admissions:
                w.writerow((p.subject_id, a.hadm_id, _fmt_date(a.admit_time), _fmt_date(a.discharge_time)))
    with _open_csv(paths["diagnoses"], header_comment) as w:
        w.writerow(DIAGNOSIS_COLUMNS)
        for p in dataset.patients:
            for a in p.admissions:
                for dx in a.diagnoses:
                    w.writerow((p.subject_id, a.hadm_id, dx.seq_num, dx.code, int(dx.version)))
    return paths


class _open_csv:
    def __init__(self, path: Path, comment: str | None):
        self.path, self.comment = path, comment

    def __enter__(self):
        self.fh = self.path.open("w", newline="", encoding="utf-8")
        if self.comment:
            self.fh.write(f"# {self.comment}\n")
        return csv.writer(self.fh, lineterminator="\n")

    def __exit__(self, *exc):
        self.fh.close()
