import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delirium_risk.cohort import assign_patient
from delirium_risk.stats import chi2_sf, z_quantile
from delirium_risk.survival import (
    DAYS_PER_MONTH, NotTestableError, SurvivalObservation, greenwood_band, km_fit, logrank_test, observations,
    to_survival,
)

from conftest import adm, day, patient


def km_oracle(durations, events):
    """Product-limit estimate in exact rationals, events leaving before ties are censored."""
    rows = []
    s = Fraction(1)
    g = Fraction(0)
    for t in sorted({d for d, e in zip(durations, events) if e}):
        n = sum(1 for d in durations if d >= t)
        d = sum(1 for dd, e in zip(durations, events) if e and dd == t)
        s *= Fraction(n - d, n)
        # None marks an exhausted risk set; the sum stays infinite from then on
        g = None if g is None or n == d else g + Fraction(d, n * (n - d))
        rows.append((t, n, d, s, g))
    return rows


def logrank_oracle(a, b):
    """O - E and V accumulated one event time at a time in plain Python."""
    times = sorted({o.duration for o in a + b if o.event})
    o_minus_e = 0.0
    v = 0.0
    for t in times:
        na = sum(o.duration >= t for o in a)
        nb = sum(o.duration >= t for o in b)
        da = sum(o.duration == t and o.event for o in a)
        db = sum(o.duration == t and o.event for o in b)
        n, d = na + nb, da + db
        o_minus_e += da - na * d / n
        if n > 1:
            v += d * (n - d) * na * nb / (n * n * (n - 1))
    return o_minus_e, v


samples = st.lists(st.tuples(st.integers(0, 12), st.booleans()), min_size=1, max_size=20)


@settings(max_examples=1000, deadline=None)
@given(samples)
def test_km_matches_rational_oracle(data):
    t = [d for d, _ in data]
    e = [ev for _, ev in data]
    curve = km_fit(observations(t, e))
    oracle = km_oracle(t, e)
    assert len(curve) == len(oracle)
    for i, (time, n, d, s, g) in enumerate(oracle):
        assert curve.time[i] == time
        assert curve.n_at_risk[i] == n and curve.n_events[i] == d
        assert curve.survival[i] == float(s)  # one rounding of the exact ratio
        if g is None:
            assert math.isinf(curve.var[i]) and curve.degenerate[i]
        else:
            assert curve.var[i] == pytest.approx(float(s * s * g), rel=1e-12, abs=0)


def test_three_point_example():
    curve = km_fit(observations([1, 2, 3], [1, 1, 0]))
    assert curve.time.tolist() == [1.0, 2.0]
    assert curve.survival.tolist() == [2 / 3, 1 / 3]
    assert curve.at(3)[0] == 1 / 3
    assert curve.at(0.5)[0] == 1.0
    assert curve.var[1] == pytest.approx(2 / 27, abs=1e-15)
    assert math.sqrt(curve.var[1]) == pytest.approx(0.272, abs=5e-4)


def test_all_censored():
    curve = km_fit(observations([1, 2, 3], [0, 0, 0]))
    assert len(curve) == 0 and curve.at(10) == (1.0, 1.0, 1.0)


def test_all_events_at_once():
    curve = km_fit(observations([2] * 4, [1] * 4))
    assert curve.survival.tolist() == [0.0]
    assert curve.degenerate[0] and curve.ci_lo[0] == 0.0 and curve.ci_hi[0] == 0.0


def test_last_subject_event_is_degenerate():
    curve = km_fit(observations([1, 2, 3], [0, 1, 1]))
    assert curve.degenerate.tolist() == [False, True]
    assert (curve.ci_lo[1], curve.ci_hi[1]) == (0.0, curve.survival[1])


def test_km_empty():
    with pytest.raises(ValueError):
        km_fit([])


def test_observation_validation():
    with pytest.raises(ValueError):
        SurvivalObservation(-1.0, True)
    with pytest.raises(ValueError):
        SurvivalObservation(float("nan"), False)


@settings(max_examples=200, deadline=None)
@given(samples, st.sampled_from([0.8, 0.9, 0.95, 0.99]))
def test_band_invariants(data, level):
    t = [d for d, _ in data]
    e = [ev for _, ev in data]
    for transform in ("linear", "loglog"):
        c = km_fit(observations(t, e), level=level, transform=transform)
        assert np.all(np.diff(c.survival) <= 0)
        assert np.all(np.diff(c.n_at_risk) < 0)
        assert np.all((0 <= c.ci_lo) & (c.ci_lo <= c.survival) & (c.survival <= c.ci_hi) & (c.ci_hi <= 1))
    log = km_fit(observations(t, e), level=level)
    z = z_quantile((1 + level) / 2)
    for i in range(len(log)):
        s, v = log.survival[i], log.var[i]
        if 0 < s < 1 and 0 < v < math.inf:
            up, down = log.ci_hi[i] - s, s - log.ci_lo[i]
            assert not math.isclose(up, down, rel_tol=1e-9)
            half = z * math.sqrt(v)
            lin = greenwood_band(log, level, "linear")
            if s - half >= 0 and s + half <= 1:
                assert lin.ci_hi[i] - s == pytest.approx(s - lin.ci_lo[i], rel=1e-9)


def test_loglog_upper_tighter_near_one():
    # one early event among 33 puts S at 32/33 = 0.9697
    curve = km_fit(observations([0.5] + [12.0] * 32, [1] + [0] * 32))
    s, lo, hi = curve.at(6.0)
    assert s == pytest.approx(0.9697, abs=5e-5)
    assert hi - s < s - lo
    assert 0 < lo < s < hi < 1


def test_unknown_transform():
    curve = km_fit(observations([1, 2], [1, 0]))
    with pytest.raises(ValueError):
        greenwood_band(curve, transform="arcsine")


@settings(max_examples=200, deadline=None)
@given(samples, st.floats(0.01, 100))
def test_scaling_invariance(data, c):
    t = [d for d, _ in data]
    e = [ev for _, ev in data]
    a, b = km_fit(observations(t, e)), km_fit(observations([c * x for x in t], e))
    assert np.array_equal(a.survival, b.survival)
    assert np.allclose(a.var, b.var, rtol=1e-12, equal_nan=True)
    assert b.time == pytest.approx(c * a.time)


def test_late_censoring_keeps_survival():
    base = km_fit(observations([1, 2, 3, 4], [1, 0, 1, 1]))
    more = km_fit(observations([1, 2, 3, 4, 9], [1, 0, 1, 1, 0]))
    early = km_fit(observations([1, 2, 3, 4, 0.5], [1, 0, 1, 1, 0]))
    assert np.all(more.n_at_risk == base.n_at_risk + 1)
    assert np.all(early.n_at_risk == base.n_at_risk)
    assert np.array_equal(early.survival, base.survival)


@settings(max_examples=1000, deadline=None)
@given(samples, samples)
def test_logrank_matches_oracle(da, db):
    a = observations(*zip(*da))
    b = observations(*zip(*db))
    if not any(o.event for o in a + b):
        with pytest.raises(NotTestableError):
            logrank_test(a, b)
        return
    o_minus_e, v = logrank_oracle(a, b)
    if v <= 0:
        if o_minus_e == 0:
            assert logrank_test(a, b).p_value == 1.0
        else:
            with pytest.raises(NotTestableError):
                logrank_test(a, b)
        return
    r = logrank_test(a, b)
    assert r.statistic == pytest.approx(o_minus_e**2 / v, rel=1e-10, abs=1e-12)
    assert r.variance == pytest.approx(v, rel=1e-10)
    assert r.p_value == chi2_sf(r.statistic, 1)
    assert 0 <= r.p_value <= 1
    assert sum(r.observed) == pytest.approx(sum(r.expected))


@given(samples)
def test_identical_groups(data):
    obs = observations(*zip(*data))
    if not any(o.event for o in obs):
        return
    r = logrank_test(obs, list(obs))
    assert r.statistic == 0.0 and r.p_value == 1.0


def test_early_events_vs_censored():
    r = logrank_test(observations([1] * 20, [1] * 20), observations([10] * 20, [0] * 20))
    assert r.p_value < 0.001
    assert r.observed == (20.0, 0.0)


def test_logrank_errors():
    with pytest.raises(ValueError):
        logrank_test([], observations([1], [1]))
    with pytest.raises(NotTestableError):
        logrank_test(observations([1], [0]), observations([2], [0]))


def test_to_survival_index_delirium(criteria):
    a = assign_patient(patient(1, adm(1, "2015-01-01", ["F05"])), criteria)
    assert to_survival(a) == SurvivalObservation(0.0, True)


def test_to_survival_censored_at_discharge(criteria):
    a = assign_patient(patient(1, adm(1, "2015-01-01", [], los=10)), criteria)
    obs = to_survival(a)
    assert not obs.event and obs.duration == pytest.approx(0.3285, abs=1e-4)
    assert obs.duration == 10 / DAYS_PER_MONTH


def test_to_survival_one_year(criteria):
    a = assign_patient(patient(1, adm(1, "2015-01-01", []), adm(2, "2016-01-01", ["F05"])), criteria)
    obs = to_survival(a)
    assert obs.event and obs.duration == 365 / DAYS_PER_MONTH
    # 365.25 days is exactly twelve months
    assert 365.25 / DAYS_PER_MONTH == 12.0


def test_to_survival_study_end(criteria):
    a = assign_patient(patient(1, adm(1, "2015-01-01", []), adm(2, "2018-01-01", ["F05"])), criteria)
    obs = to_survival(a, study_end=day("2016-01-01"))
    assert not obs.event and obs.duration == 365 / DAYS_PER_MONTH


def test_to_survival_excluded(criteria):
    a = assign_patient(patient(1, adm(1, "2015-01-01", ["G30"])), criteria)
    with pytest.raises(ValueError):
        to_survival(a)
