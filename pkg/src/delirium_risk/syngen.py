"""Seeded synthetic EHR generator with a planted delirium risk structure.

Covariate trajectories (admissions, comorbidity codes, filler codes) are
simulated first. Delirium at admission j is then drawn with probability

    sigmoid(baseline + w_cci * cci + w_age * (age - 79) / 10
            + w_diabetes_cc * diabetes_cc + w_mci * mci)

where cci, diabetes_cc and mci describe the history *before* admission j.
A patient's ground-truth risk is the exact probability of at least one
delirium admission, 1 - prod_j (1 - p_j).
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .comorbidity import CONDITIONS, CharlsonMap, cci_score, load_charlson_map
from .ehr import Admission, Dataset, DiagnosisCode, ICDVersion, Patient

ICD10_CUTOVER = dt.date(2015, 10, 1)

DELIRIUM_CODES = {ICDVersion.ICD9: ("2930", "29281"), ICDVersion.ICD10: ("F05",)}
MCI_CODES = {ICDVersion.ICD9: "33183", ICDVersion.ICD10: "G3184"}
EXCLUSION_CODES = {ICDVersion.ICD9: ("3310", "2900", "29410"), ICDVersion.ICD10: ("G30", "F03", "G20")}

# common codes that carry no Charlson weight and no cohort meaning
FILLER_CODES = {
    ICDVersion.ICD9: ("4019", "2724", "53081", "5990", "2449", "2859", "42731", "311", "78650",
                      "V5861", "2761", "41401", "V1582", "27800", "7823", "V4581"),
    ICDVersion.ICD10: ("I10", "E785", "K219", "N390", "E039", "D649", "I4891", "F329", "Z7901",
                       "E871", "Z87891", "J189", "N400", "M810", "R0602", "K5900"),
}

DEFAULT_ONSET = {
    "myocardial_infarction": 0.020,
    "congestive_heart_failure": 0.045,
    "peripheral_vascular_disease": 0.020,
    "cerebrovascular_disease": 0.025,
    "chronic_pulmonary_disease": 0.040,
    "rheumatic_disease": 0.008,
    "peptic_ulcer_disease": 0.004,
    "mild_liver_disease": 0.008,
    "diabetes_without_cc": 0.040,
    "diabetes_with_cc": 0.020,
    "paraplegia": 0.006,
    "renal_disease": 0.040,
    "malignant_cancer": 0.025,
    "severe_liver_disease": 0.003,
    "metastatic_solid_tumor": 0.010,
}


@dataclass
class SynthConfig:
    n_patients: int = 3000
    max_admissions: int = 8
    mean_extra_admissions: float = 2.5
    mci_prevalence: float = 0.015
    excluded_fraction: float = 0.02
    baseline_logit: float = -8.0
    w_cci: float = 2.5
    w_age: float = 2.5
    w_diabetes_cc: float = 1.5
    w_mci: float = 2.0
    frailty_shape: float = 0.5
    initial_onset_scale: float = 6.0
    onset: dict = field(default_factory=lambda: dict(DEFAULT_ONSET))
    age_mean: float = 79.0
    age_sd: float = 7.0
    age_min: int = 55
    age_max: int = 100
    mean_gap_days: float = 240.0
    mean_los_days: float = 6.0
    mean_filler_codes: float = 6.0
    start: dt.date = dt.date(2008, 1, 1)
    end: dt.date = dt.date(2019, 12, 31)
    seed: int = 42

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if self.max_admissions < 1:
            raise ValueError("max_admissions must be >= 1")
        for name in ("mci_prevalence", "excluded_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for cond, p in self.onset.items():
            if cond not in CONDITIONS or not 0.0 <= p <= 1.0:
                raise ValueError(f"bad onset probability {cond}={p}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"], d["end"] = self.start.isoformat(), self.end.isoformat()
        return d


@dataclass
class _Trajectory:
    subject_id: str
    gender: str
    anchor_age: int
    admissions: list  # [(hadm_id, admit, discharge, [(code, version)])]
    logits: list  # per admission
    mci: bool
    excluded: bool


def _version(day: dt.date) -> ICDVersion:
    return ICDVersion.ICD9 if day < ICD10_CUTOVER else ICDVersion.ICD10


def _condition_codes(cmap: CharlsonMap) -> dict:
    # exact-match codes only: prefixes that belong to a single condition
    owner: dict = {}
    for cond in CONDITIONS:
        for prefix, version in cmap.codesets[cond].entries:
            owner.setdefault((prefix, version), set()).add(cond)
    out = {}
    for cond in CONDITIONS:
        for version in ICDVersion:
            pool = []
            for prefix, v in cmap.codesets[cond].entries:
                if v != version:
                    continue
                dx = DiagnosisCode(prefix, v)
                hits = [c for c in CONDITIONS if cmap.codesets[c].match(dx) is not None]
                if hits == [cond]:
                    pool.append(prefix)
            out[(cond, version)] = tuple(pool)
    return out


def _simulate(config: SynthConfig, cmap: CharlsonMap, rng: np.random.Generator) -> list[_Trajectory]:
    pools = _condition_codes(cmap)
    span = (config.end - config.start).days
    onset = np.array([config.onset.get(c, 0.0) for c in CONDITIONS])
    out = []
    hadm = 20_000_000
    for n in range(config.n_patients):
        sid = str(10_000_000 + n)
        gender = "F" if rng.random() < 0.53 else "M"
        age = int(np.clip(round(rng.normal(config.age_mean, config.age_sd)), config.age_min, config.age_max))
        frailty = rng.gamma(config.frailty_shape, 1.0 / config.frailty_shape)
        n_adm = min(config.max_admissions, 1 + rng.poisson(config.mean_extra_admissions))
        mci = rng.random() < config.mci_prevalence
        mci_at = int(rng.integers(0, min(2, n_adm))) if mci else -1
        excluded = rng.random() < config.excluded_fraction
        excl_at = int(rng.integers(0, n_adm)) if excluded else -1

        day = config.start + dt.timedelta(days=int(rng.integers(0, max(1, int(span * 0.75)))))
        flags = np.zeros(len(CONDITIONS), dtype=bool)
        adms, logits = [], []
        first = day
        for j in range(n_adm):
            if j:
                day = day + dt.timedelta(days=1 + int(rng.exponential(config.mean_gap_days)))
            if day > config.end:
                break
            los = 1 + int(rng.poisson(config.mean_los_days - 1))
            discharge = min(day + dt.timedelta(days=los), config.end)
            version = _version(day)
            # risk uses the history before this admission
            prior = dict(zip(CONDITIONS, flags.tolist()))
            years = (day.year - first.year) - ((day.month, day.day) < (first.month, first.day))
            logits.append(
                config.baseline_logit
                + config.w_cci * cci_score(prior, cmap.weights)
                + config.w_age * ((age + years) - 79.0) / 10.0
                + config.w_diabetes_cc * prior["diabetes_with_cc"]
                + config.w_mci * (mci and j > mci_at)
            )
            codes = []
            rate = onset * frailty * (config.initial_onset_scale if j == 0 else 1.0)
            new = (rng.random(len(CONDITIONS)) < np.minimum(1.0, rate)) & ~flags
            carry = flags & (rng.random(len(CONDITIONS)) < 0.6)
            for ci in np.flatnonzero(new | carry):
                pool = pools[(CONDITIONS[ci], version)]
                codes.append((pool[int(rng.integers(len(pool)))], version))
            flags |= new
            fill = FILLER_CODES[version]
            for _ in range(int(rng.poisson(config.mean_filler_codes))):
                codes.append((fill[int(rng.integers(len(fill)))], version))
            if j == mci_at:
                codes.append((MCI_CODES[version], version))
            if j == excl_at:
                opts = EXCLUSION_CODES[version]
                codes.append((opts[int(rng.integers(len(opts)))], version))
            adms.append((str(hadm), day, discharge, codes))
            hadm += 1
            day = discharge
        if not adms:
            continue
        out.append(_Trajectory(sid, gender, age, adms, logits, mci and mci_at < len(adms), excluded and excl_at < len(adms)))
    return out


def _sigmoid(x: float) -> float:
    if x == -math.inf:
        return 0.0
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def true_risk(logits) -> float:
    surv = 1.0
    for lg in logits:
        surv *= 1.0 - _sigmoid(lg)
    return 1.0 - surv


@dataclass
class GroundTruth:
    subject_id: str
    true_risk: float
    label: bool


def generate(config: SynthConfig | None = None, cmap: CharlsonMap | None = None) -> tuple[Dataset, list[GroundTruth]]:
    """Simulate a dataset and the per-patient ground-truth risk table."""
    config = config or SynthConfig()
    cmap = cmap or load_charlson_map()
    rng = np.random.default_rng(config.seed)
    trajs = _simulate(config, cmap, rng)
    patients, truth = [], []
    for k, tr in enumerate(trajs):
        label = False
        admissions = []
        for (hid, t0, t1, codes), lg in zip(tr.admissions, tr.logits):
            if rng.random() < _sigmoid(lg):
                label = True
                version = _version(t0)
                options = DELIRIUM_CODES[version]
                codes = codes + [(options[k % len(options)], version)]
            dxs = tuple(DiagnosisCode(c, v, i + 1) for i, (c, v) in enumerate(codes))
            admissions.append(Admission(hid, t0, t1, dxs))
        patients.append(Patient(tr.subject_id, tr.gender, tr.anchor_age, tuple(admissions)))
        truth.append(GroundTruth(tr.subject_id, true_risk(tr.logits), label))
    return Dataset(tuple(patients), f"synthetic seed={config.seed} n={config.n_patients}"), truth


def expected_prevalence(config: SynthConfig, n_mc: int = 20_000, seed: int = 12345,
                        cmap: CharlsonMap | None = None) -> float:
    """Mean exact label probability over independently simulated covariates."""
    cmap = cmap or load_charlson_map()
    cfg = SynthConfig(**{**config.__dict__, "n_patients": n_mc, "seed": seed})
    trajs = _simulate(cfg, cmap, np.random.default_rng(seed))
    return float(np.mean([true_risk(t.logits) for t in trajs]))


def write_ground_truth(truth, path, header_comment: str | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("subject_id", "true_risk", "label"))
        for g in truth:
            w.writerow((g.subject_id, repr(g.true_risk), int(g.label)))
    return path


def read_ground_truth(path) -> list[GroundTruth]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        return [GroundTruth(r["subject_id"], float(r["true_risk"]), r["label"] == "1") for r in rows]
