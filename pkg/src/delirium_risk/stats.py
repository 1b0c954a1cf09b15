"""Proportions with Wald intervals and Pearson chi-square tests on 2x2 tables.

Special functions (normal quantile, chi-square tail) are implemented here
with the standard library only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "ProportionEstimate",
    "ChiSquareResult",
    "TwoByTwo",
    "DegenerateTableError",
    "z_quantile",
    "normal_cdf",
    "gammaincc",
    "chi2_sf",
    "wald_ci",
    "chi2_test_2x2",
    "comorbidity_table",
]


class DegenerateTableError(ValueError):
    """A 2x2 table with a zero marginal has no defined chi-square statistic."""


# Acklam's rational approximation coefficients for the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def z_quantile(q: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    if q < _P_LOW:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    elif q <= 1.0 - _P_LOW:
        s = q - 0.5
        r = s * s
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        r = math.sqrt(-2.0 * math.log1p(-q))
        x = -(((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    # Halley refinement; the tail residual uses erfc to avoid cancellation
    for _ in range(2):
        if x < 0:
            err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
        else:
            err = (1.0 - q) - 0.5 * math.erfc(x / math.sqrt(2.0))
        u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def _gammainc_series(a: float, x: float) -> float:
    # lower regularized P(a, x), valid for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gammaincc_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz, valid for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gammainc_series(a, x)
    return _gammaincc_cf(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail P(X >= x) of a chi-square variable with ``df`` degrees."""
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi-square statistic must be non-negative, got {x}")
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(x):
        return 0.0
    return min(1.0, max(0.0, gammaincc(df / 2.0, x / 2.0)))


@dataclass(frozen=True)
class ProportionEstimate:
    k: int
    n: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    level: float = 0.95

    def __str__(self) -> str:
        return f"{self.p_hat:.3f} ({self.ci_lo:.3f}-{self.ci_hi:.3f})"


def wald_ci(k: int, n: int, level: float = 0.95) -> ProportionEstimate:
    """Wald interval p +/- z sqrt(p(1-p)/n), clipped to [0, 1]."""
    if n < 1:
        raise ValueError("undefined proportion: n must be >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    p = k / n
    half = z_quantile((1.0 + level) / 2.0) * math.sqrt(p * (1.0 - p) / n)
    return ProportionEstimate(k, n, p, max(0.0, p - half), min(1.0, p + half), level)


@dataclass(frozen=True)
class TwoByTwo:
    """Rows are groups, columns are condition present / absent."""

    a: int
    b: int
    c: int
    d: int

    @classmethod
    def from_groups(cls, k1: int, n1: int, k2: int, n2: int) -> "TwoByTwo":
        return cls(k1, n1 - k1, k2, n2 - k2)

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    def marginals(self) -> tuple[int, int, int, int]:
        return (self.a + self.b, self.c + self.d, self.a + self.c, self.b + self.d)

    @property
    def degenerate(self) -> bool:
        return min(self.marginals()) == 0


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float


def chi2_test_2x2(t: TwoByTwo, yates: bool = False) -> ChiSquareResult:
    """Pearson chi-square test of independence, df = 1."""
    if min(t.a, t.b, t.c, t.d) < 0:
        raise ValueError("counts must be non-negative")
    if t.degenerate:
        raise DegenerateTableError(f"zero marginal in {t}")
    r1, r2, c1, c2 = t.marginals()
    diff = abs(t.a * t.d - t.b * t.c)
    if yates:
        diff = max(0.0, diff - t.n / 2.0)
    # exact integer arithmetic until the final division
    stat = t.n * diff * diff / (r1 * r2 * c1 * c2)
    return ChiSquareResult(float(stat), 1, chi2_sf(float(stat), 1))


@dataclass(frozen=True)
class ComparisonRow:
    condition: str
    group1: ProportionEstimate | None
    group2: ProportionEstimate | None
    chi2: float | None
    p_value: float | None
    degenerate: bool

    def as_csv(self) -> list:
        def est(e):
            if e is None:
                return ["", "", "", "", ""]
            return [e.k, e.n, f"{e.p_hat:.6f}", f"{e.ci_lo:.6f}", f"{e.ci_hi:.6f}"]

        return [self.condition, *est(self.group1), *est(self.group2),
                "" if self.chi2 is None else f"{self.chi2:.6f}",
                "" if self.p_value is None else f"{self.p_value:.6g}",
                int(self.degenerate)]


TABLE_COLUMNS = (
    "condition", "group1_k", "group1_n", "group1_p", "group1_lo", "group1_hi",
    "group2_k", "group2_n", "group2_p", "group2_lo", "group2_hi", "chi2", "p_value", "degenerate",
)


def comorbidity_table(
    group1: Sequence[Mapping[str, bool]],
    group2: Sequence[Mapping[str, bool]],
    conditions: Sequence[str],
    level: float = 0.95,
    yates: bool = False,
) -> list[ComparisonRow]:
    """Per-condition prevalence (Wald CI) in two groups plus a chi-square p-value.

    Each group is a sequence of flag mappings, one per patient. Rows with a
    zero marginal are flagged ``degenerate`` with no p-value.
    """
    if not group1 or not group2:
        raise ValueError("both groups need at least one member")
    rows = []
    for cond in conditions:
        k1 = sum(bool(f[cond]) for f in group1)
        k2 = sum(bool(f[cond]) for f in group2)
        rows.append(compare_counts(cond, k1, len(group1), k2, len(group2), level, yates))
    return rows


def compare_counts(condition: str, k1: int, n1: int, k2: int, n2: int,
                   level: float = 0.95, yates: bool = False) -> ComparisonRow:
    table = TwoByTwo.from_groups(k1, n1, k2, n2)
    e1, e2 = wald_ci(k1, n1, level), wald_ci(k2, n2, level)
    if table.degenerate:
        return ComparisonRow(condition, e1, e2, None, None, True)
    res = chi2_test_2x2(table, yates=yates)
    return ComparisonRow(condition, e1, e2, res.statistic, res.p_value, False)
