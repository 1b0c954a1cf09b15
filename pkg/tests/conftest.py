import datetime as dt
import subprocess
import sys
from pathlib import Path

import pytest

from delirium_risk.cohort import load_criteria
from delirium_risk.comorbidity import load_charlson_map
from delirium_risk.ehr import Admission, Dataset, DiagnosisCode, ICDVersion, Patient

ICD9, ICD10 = ICDVersion.ICD9, ICDVersion.ICD10


def day(s: str) -> dt.date:
    return dt.date.fromisoformat(s)


def adm(hadm_id, admit, codes, los=3):
    """Admission from ``codes`` given as "F05" (ICD10) or ("2930", 9)."""
    dxs = []
    for i, c in enumerate(codes, 1):
        code, version = (c, ICD10) if isinstance(c, str) else c
        dxs.append(DiagnosisCode(code, ICDVersion.parse(version), i))
    start = day(admit)
    return Admission(str(hadm_id), start, start + dt.timedelta(days=los), tuple(dxs))


def patient(sid, *admissions, gender="F", age=75):
    return Patient(str(sid), gender, age, tuple(admissions))


def dataset(*patients):
    return Dataset(tuple(patients), "test")


@pytest.fixture(scope="session")
def criteria():
    return load_criteria()


@pytest.fixture(scope="session")
def cmap():
    return load_charlson_map()


# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "delirium_risk.cli", *map(str, args)],
                          capture_output=True, text=True, cwd=cwd)


ROOT = Path(__file__).resolve().parent.parent
