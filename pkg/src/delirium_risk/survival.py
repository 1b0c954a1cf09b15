"""Kaplan-Meier estimation, Greenwood confidence bands and the log-rank test."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cohort import CohortAssignment
from .stats import chi2_sf, z_quantile

DAYS_PER_MONTH = 30.4375


class NotTestableError(ValueError):
    """The log-rank statistic is undefined (no events, or zero variance)."""


@dataclass(frozen=True)
class SurvivalObservation:
    duration: float
    event: bool

    def __post_init__(self):
        if not math.isfinite(self.duration) or self.duration < 0:
            raise ValueError(f"duration must be finite and >= 0, got {self.duration}")


def months_between(start: dt.date, end: dt.date) -> float:
    return (end - start).days / DAYS_PER_MONTH


def to_survival(assignment: CohortAssignment, study_end: dt.date | None = None) -> SurvivalObservation:
    """Time from the index admission to first delirium, else censored.

    Censoring happens at the last discharge or ``study_end``, whichever is
    earlier.
    """
    if assignment.excluded:
        raise ValueError(f"patient {assignment.subject_id} is excluded from the cohort")
    start = assignment.index_admission_time
    if assignment.has_delirium and (study_end is None or assignment.first_delirium_time <= study_end):
        if assignment.first_delirium_time < start:
            raise ValueError(f"patient {assignment.subject_id}: delirium precedes index admission")
        return SurvivalObservation(months_between(start, assignment.first_delirium_time), True)
    end = assignment.last_discharge_time
    if study_end is not None and study_end < end:
        end = study_end
    return SurvivalObservation(max(0.0, months_between(start, end)), False)


def observations(durations, events) -> list[SurvivalObservation]:
    return [SurvivalObservation(float(t), bool(e)) for t, e in zip(durations, events)]


@dataclass(frozen=True)
class KMCurve:
    """Product-limit estimate tabulated at the distinct event times."""

    time: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray
    survival: np.ndarray
    greenwood_sum: np.ndarray  # running sum of d / (n (n - d))
    var: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    degenerate: np.ndarray
    n: int
    total_events: int
    level: float = 0.95
    transform: str = "loglog"

    def __len__(self) -> int:
        return len(self.time)

    def at(self, t: float) -> tuple[float, float, float]:
        """(S, lo, hi) of the right-continuous step function at time ``t``."""
        idx = int(np.searchsorted(self.time, t, side="right")) - 1
        if idx < 0:
            return 1.0, 1.0, 1.0
        return float(self.survival[idx]), float(self.ci_lo[idx]), float(self.ci_hi[idx])

    def rows(self) -> list[tuple]:
        return list(zip(self.time.tolist(), self.n_at_risk.tolist(), self.n_events.tolist(),
                        self.survival.tolist(), self.var.tolist(), self.ci_lo.tolist(), self.ci_hi.tolist()))


def _arrays(obs: Sequence[SurvivalObservation]) -> tuple[np.ndarray, np.ndarray]:
    t = np.array([o.duration for o in obs], dtype=float)
    e = np.array([o.event for o in obs], dtype=bool)
    return t, e


def km_fit(obs: Sequence[SurvivalObservation], level: float = 0.95, transform: str = "loglog") -> KMCurve:
    """Kaplan-Meier estimator; censorings tied with events leave after the events."""
    if len(obs) == 0:
        raise ValueError("km_fit needs at least one observation")
    t, e = _arrays(obs)
    order = np.sort(t)
    times = np.unique(t[e])
    at_risk = len(t) - np.searchsorted(order, times, side="left")
    d = np.array([np.count_nonzero(t[e] == u) for u in times], dtype=np.int64)

    # running product as an exact ratio of integers, rounded once per step
    surv = np.empty(len(times))
    num, den = 1, 1
    for i, (n_i, d_i) in enumerate(zip(at_risk.tolist(), d.tolist())):
        num *= n_i - d_i
        den *= n_i
        surv[i] = num / den

    with np.errstate(divide="ignore"):
        terms = np.where(at_risk > d, d / (at_risk * np.maximum(at_risk - d, 1)), np.inf)
    gsum = np.cumsum(terms) if len(terms) else terms
    var = np.where(np.isinf(gsum), np.inf, surv**2 * np.where(np.isinf(gsum), 0.0, gsum))
    curve = KMCurve(
        time=times, n_at_risk=at_risk.astype(np.int64), n_events=d, survival=surv,
        greenwood_sum=gsum, var=var, ci_lo=surv.copy(), ci_hi=surv.copy(),
        degenerate=np.zeros(len(times), dtype=bool), n=len(t), total_events=int(e.sum()),
        level=level, transform=transform,
    )
    return greenwood_band(curve, level, transform)


def greenwood_band(curve: KMCurve, level: float = 0.95, transform: str = "loglog") -> KMCurve:
    """Attach pointwise confidence limits from Greenwood's variance.

    ``linear`` is S +/- z sqrt(V) clipped to [0, 1]; ``loglog`` builds the
    interval on log(-log S), which keeps it inside [0, 1] and asymmetric.
    Points where the variance is infinite (risk set exhausted) get (0, S)
    and are flagged degenerate.
    """
    if transform not in ("linear", "loglog"):
        raise ValueError(f"unknown band transform {transform!r}")
    z = z_quantile((1.0 + level) / 2.0)
    s, gsum = curve.survival, curve.greenwood_sum
    lo, hi = s.copy(), s.copy()
    degenerate = np.isinf(gsum) | (s <= 0.0)
    ok = ~degenerate & (s < 1.0)
    if transform == "linear":
        half = z * np.sqrt(curve.var[ok])
        lo[ok] = np.clip(s[ok] - half, 0.0, 1.0)
        hi[ok] = np.clip(s[ok] + half, 0.0, 1.0)
    else:
        log_s = np.log(s[ok])
        se = np.sqrt(gsum[ok]) / np.abs(log_s)
        lo[ok] = np.exp(log_s * np.exp(z * se))
        hi[ok] = np.exp(log_s * np.exp(-z * se))
    lo[degenerate] = 0.0
    hi[degenerate] = s[degenerate]
    return replace(curve, ci_lo=lo, ci_hi=hi, degenerate=degenerate, level=level, transform=transform)


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    p_value: float
    observed: tuple[float, float]
    expected: tuple[float, float]
    variance: float


def logrank_test(group_a: Sequence[SurvivalObservation], group_b: Sequence[SurvivalObservation]) -> LogRankResult:
    """Two-sample log-rank test with the hypergeometric variance."""
    if not group_a or not group_b:
        raise ValueError("both groups need at least one observation")
    ta, ea = _arrays(group_a)
    tb, eb = _arrays(group_b)
    times = np.unique(np.concatenate([ta[ea], tb[eb]]))
    if len(times) == 0:
        raise NotTestableError("no events in either group")
    sa, sb = np.sort(ta), np.sort(tb)
    na = len(ta) - np.searchsorted(sa, times, side="left")
    nb = len(tb) - np.searchsorted(sb, times, side="left")
    da = np.array([np.count_nonzero(ta[ea] == u) for u in times], dtype=float)
    db = np.array([np.count_nonzero(tb[eb] == u) for u in times], dtype=float)
    n = (na + nb).astype(float)
    d = da + db
    exp_a = na * d / n
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(n > 1, d * (n - d) * na * nb / (n * n * (n - 1)), 0.0)
    o_minus_e = float(np.sum(da - exp_a))
    var = float(np.sum(v))
    if var <= 0:
        if o_minus_e == 0:
            return LogRankResult(0.0, 1.0, (float(da.sum()), float(db.sum())),
                                 (float(exp_a.sum()), float(d.sum() - exp_a.sum())), 0.0)
        raise NotTestableError("zero log-rank variance")
    stat = o_minus_e**2 / var
    return LogRankResult(
        statistic=stat,
        p_value=chi2_sf(stat, 1),
        observed=(float(da.sum()), float(db.sum())),
        expected=(float(exp_a.sum()), float(d.sum() - exp_a.sum())),
        variance=var,
    )
