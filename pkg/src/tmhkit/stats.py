"""Agreement and correlation statistics.

ICC follows the two-way fixed-effects absolute-agreement formulas
exactly as published, including the c2 form whose denominator divides
(MSC - MSE) by n without a k factor; p-values come from the
t-distribution via a continued-fraction incomplete beta.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UndefinedIccError


@dataclass
class RaterTable:
    """n subjects x k raters, no missing cells."""

    values: np.ndarray
    subject_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("rater table must be 2-D")
        n, k = self.values.shape
        if n < 2 or k < 2:
            raise ValueError(f"need n >= 2 subjects and k >= 2 raters, got {n}x{k}")
        if not np.isfinite(self.values).all():
            raise ValueError("rater table contains non-finite cells")
        if not self.subject_ids:
            self.subject_ids = [str(i) for i in range(n)]
        if len(self.subject_ids) != n:
            raise ValueError("subject_ids length must match row count")

    @classmethod
    def from_csv(cls, path) -> "RaterTable":
        """Header row = rater ids; each following row = subject id, values."""
        rows = list(csv.reader(Path(path).open()))
        if len(rows) < 3:
            raise ValueError("rater CSV needs a header and at least 2 subjects")
        ids, values = [], []
        for row in rows[1:]:
            if not row:
                continue
            ids.append(row[0])
            values.append([float(v) for v in row[1:]])
        return cls(np.array(values), subject_ids=ids)


@dataclass
class AnovaDecomposition:
    msr: float
    msc: float
    mse: float


def anova_two_way(t: RaterTable) -> AnovaDecomposition:
    """Row, column, and residual mean squares of the two-way model."""
    x = t.values
    n, k = x.shape
    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    msr = k * float(((row_means - grand) ** 2).sum()) / (n - 1)
    msc = n * float(((col_means - grand) ** 2).sum()) / (k - 1)
    resid = x - row_means[:, None] - col_means[None, :] + grand
    mse = float((resid**2).sum()) / ((n - 1) * (k - 1))
    return AnovaDecomposition(msr, msc, mse)


def icc(t: RaterTable) -> tuple:
    """(c1, c2): single-rater and mean-of-k-raters agreement."""
    dec = anova_two_way(t)
    n, k = t.values.shape
    den1 = dec.msr + (k - 1) * dec.mse + (k / n) * (dec.msc - dec.mse)
    den2 = dec.msr + (dec.msc - dec.mse) / n
    if den1 == 0 or den2 == 0:
        raise UndefinedIccError(
            "ICC undefined: zero denominator (constant table?)", decomposition=dec
        )
    return (dec.msr - dec.mse) / den1, (dec.msr - dec.mse) / den2


# --------------------------------------------------------------- p-values


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-10:
            return h
    raise ArithmeticError("incomplete beta continued fraction failed to converge")


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t_stat: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isinf(t_stat):
        return 0.0
    return _betai(df / 2.0, 0.5, df / (df + t_stat * t_stat))


def _corr_p(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t_stat = r * math.sqrt((n - 2) / (1.0 - r * r))
    return t_sf_two_sided(t_stat, n - 2)


# ------------------------------------------------------------ correlations


def _validate_pair(x, y, min_len: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-D sequences")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {x.size}")
    return x, y


def pearson(x, y) -> tuple:
    """(r, two-sided p). r computed as sxy / sqrt(sxx * syy)."""
    x, y = _validate_pair(x, y, 3)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance input")
    r = float((dx * dy).sum()) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return r, _corr_p(r, x.size)


def _midranks(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their positions."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> tuple:
    """(rho, two-sided p). Tie-free data uses the exact d^2 identity."""
    x, y = _validate_pair(x, y, 3)
    rx = _midranks(x)
    ry = _midranks(y)
    n = x.size
    no_ties = np.unique(x).size == n and np.unique(y).size == n
    if no_ties:
        d2 = float(((rx - ry) ** 2).sum())
        rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    else:
        rho = pearson(rx, ry)[0]
    rho = max(-1.0, min(1.0, rho))
    return rho, _corr_p(rho, n)


def acc_tmh(measured, truth, tol_px: float = 3.0) -> float:
    """Fraction of measurements within tol_px of truth, boundary inclusive."""
    m = np.asarray(measured, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if m.shape != t.shape or m.ndim != 1 or m.size < 1:
        raise ValueError("measured and truth must be equal-length non-empty sequences")
    return float((np.abs(m - t) <= tol_px).sum()) / m.size


def linreg(x, y) -> tuple:
    """Ordinary least squares: (slope, intercept, r2). Constant y gives r2=0."""
    x, y = _validate_pair(x, y, 2)
    dx = x - x.mean()
    sxx = float((dx * dx).sum())
    if sxx == 0.0:
        raise ValueError("zero variance in x")
    slope = float((dx * (y - y.mean())).sum()) / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float((resid**2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


@dataclass
class BlandAltman:
    mean_diff: float
    lower_loa: float
    upper_loa: float
    pct_within: float
    points: list  # (mean of pair, difference)


def bland_altman(a, b) -> BlandAltman:
    """Paired-difference agreement: LoA = mean +/- 1.96 sd (sample sd)."""
    a, b = _validate_pair(a, b, 2)
    d = a - b
    mean_diff = float(d.mean())
    sd = float(d.std(ddof=1))
    lower = mean_diff - 1.96 * sd
    upper = mean_diff + 1.96 * sd
    within = float(((d >= lower) & (d <= upper)).sum()) / d.size
    points = [(float(m), float(v)) for m, v in zip((a + b) / 2.0, d)]
    return BlandAltman(mean_diff, lower, upper, within, points)


@dataclass
class AgreementReport:
    icc_c1: float
    icc_c2: float
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float
    acc: float
    slope: float
    intercept: float
    r2: float
    mean_diff: float
    lower_loa: float
    upper_loa: float
    pct_within: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.__dataclass_fields__]

    @classmethod
    def csv_header(cls) -> list:
        return list(cls.__dataclass_fields__)


def agreement_report(measured, truth, tol_px: float = 3.0) -> AgreementReport:
    """All agreement statistics between one measured series and its truth."""
    m = np.asarray(measured, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    c1, c2 = icc(RaterTable(np.column_stack([m, t])))
    r, rp = pearson(m, t)
    rho, rhop = spearman(m, t)
    slope, intercept, r2 = linreg(t, m)
    ba = bland_altman(m, t)
    return AgreementReport(
        icc_c1=c1,
        icc_c2=c2,
        pearson_r=r,
        pearson_p=rp,
        spearman_rho=rho,
        spearman_p=rhop,
        acc=acc_tmh(m, t, tol_px),
        slope=slope,
        intercept=intercept,
        r2=r2,
        mean_diff=ba.mean_diff,
        lower_loa=ba.lower_loa,
        upper_loa=ba.upper_loa,
        pct_within=ba.pct_within,
    )
