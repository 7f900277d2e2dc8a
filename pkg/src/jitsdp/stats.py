"""Label-sequence statistics: pair/triplet tables, independence test, drift.

The chi-square p-value is computed from scratch via the regularized
incomplete gamma function (series + continued fraction) so the numeric core
has no dependency beyond the stdlib; tests compare it against a
high-precision reference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import WINDOW_90_DAYS, Dataset
from .errors import (
    DegenerateTableError,
    InsufficientDataError,
    UnsupportedDatasetError,
)

_EPS = 1e-16
_MAX_ITER = 600


def _regularized_gamma_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series (x < a+1)."""
    ap = a
    delta = total = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _regularized_gamma_cf(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction
    (modified Lentz), valid for x >= a+1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
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
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) for a > 0, x >= 0."""
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _regularized_gamma_series(a, x)
    return _regularized_gamma_cf(a, x)


def chi_square_sf(statistic: float, dof: int = 1) -> float:
    """Chi-square survival function via the incomplete gamma function."""
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    return regularized_gamma_q(dof / 2.0, statistic / 2.0)


# Acklam's rational approximation to the inverse normal CDF.
# Documented relative accuracy about 1.15e-9 over the full open interval.
_ACKLAM_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_ACKLAM_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e+00, 3.754408661907416e+00,
)


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile by Acklam's rational approximation."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    p_low, p_high = 0.02425, 1.0 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > p_high:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


def confidence_z(confidence: float) -> float:
    """Two-sided normal z for a confidence level; 0.95 is pinned at 1.96."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if confidence == 0.95:
        return 1.96
    return inverse_normal_cdf(0.5 * (1.0 + confidence))


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Counts of consecutive label pairs: n_ab = #(prev=a, next=b)."""

    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    def as_array(self) -> np.ndarray:
        return np.array([[self.n00, self.n01], [self.n10, self.n11]], dtype=np.float64)


@dataclass(frozen=True)
class TripletDistribution:
    """Empirical distribution of consecutive label triplets with CLT bands."""

    p: dict[str, float]
    n: int
    ci_half_width: dict[str, float]


@dataclass(frozen=True)
class DriftSeries:
    """Windowed P(0|1) / P(1|1); None marks windows with no defect-first pair."""

    window_starts: tuple[int, ...]
    p01: tuple[float | None, ...]
    p11: tuple[float | None, ...]


def pair_table(dataset: Dataset) -> ContingencyTable2x2:
    """Count the |d|-1 sliding label pairs of a timestamp-ordered dataset."""
    if len(dataset) < 2:
        raise InsufficientDataError("pair_table: need at least 2 changesets")
    labels = dataset.labels()
    prev, curr = labels[:-1], labels[1:]
    return ContingencyTable2x2(
        n00=int(np.sum((prev == 0) & (curr == 0))),
        n01=int(np.sum((prev == 0) & (curr == 1))),
        n10=int(np.sum((prev == 1) & (curr == 0))),
        n11=int(np.sum((prev == 1) & (curr == 1))),
    )


def chi_square_independence(table: ContingencyTable2x2) -> tuple[float, float]:
    """Pearson chi-square test of independence on a 2x2 table (1 dof, no
    continuity correction). Returns (statistic, p_value)."""
    obs = table.as_array()
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    if (row <= 0).any() or (col <= 0).any():
        raise DegenerateTableError(
            f"zero marginal in table {obs.tolist()}; expected counts undefined"
        )
    expected = np.outer(row, col) / obs.sum()
    statistic = float(((obs - expected) ** 2 / expected).sum())
    return statistic, chi_square_sf(statistic, dof=1)


def intersecting_fraction(dataset: Dataset) -> float:
    """Fraction of consecutive changeset pairs that touch a common file."""
    if len(dataset) < 2:
        raise InsufficientDataError("intersecting_fraction: need at least 2 changesets")
    for c in dataset.changesets:
        if c.modified_files is None:
            raise UnsupportedDatasetError(
                f"changeset {c.id} has no modified_files; cannot intersect"
            )
    hits = sum(
        1
        for a, b in zip(dataset.changesets[:-1], dataset.changesets[1:])
        if a.modified_files & b.modified_files
    )
    return hits / (len(dataset) - 1)


_PATTERNS = tuple(f"{a}{b}{c}" for a in "01" for b in "01" for c in "01")


def triplet_distribution(dataset: Dataset, confidence: float = 0.95) -> TripletDistribution:
    """Empirical distribution of the |d|-2 sliding label triplets, with
    normal-approximation confidence half-widths per cell."""
    if len(dataset) < 3:
        raise InsufficientDataError("triplet_distribution: need at least 3 changesets")
    z = confidence_z(confidence)
    labels = dataset.labels()
    codes = 4 * labels[:-2] + 2 * labels[1:-1] + labels[2:]
    counts = np.bincount(codes, minlength=8)
    n = len(dataset) - 2
    p = {pattern: counts[i] / n for i, pattern in enumerate(_PATTERNS)}
    half = {
        pattern: z * math.sqrt(p[pattern] * (1.0 - p[pattern]) / n)
        for pattern in _PATTERNS
    }
    return TripletDistribution(p=p, n=n, ci_half_width=half)


def drift_series(
    dataset: Dataset, window_seconds: int = WINDOW_90_DAYS
) -> DriftSeries:
    """Windowed defect-transition probabilities. A pair belongs to the window
    containing its first changeset; windows without defect-first pairs get
    None rather than zero."""
    if len(dataset) < 2:
        raise InsufficientDataError("drift_series: need at least 2 changesets")
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    timestamps = dataset.timestamps()
    labels = dataset.labels()
    t0 = int(timestamps[0])
    n_windows = int((timestamps[-1] - t0) // window_seconds) + 1
    n10 = np.zeros(n_windows, dtype=np.int64)
    n11 = np.zeros(n_windows, dtype=np.int64)
    pair_windows = (timestamps[:-1] - t0) // window_seconds
    first_defect = labels[:-1] == 1
    np.add.at(n10, pair_windows[first_defect & (labels[1:] == 0)], 1)
    np.add.at(n11, pair_windows[first_defect & (labels[1:] == 1)], 1)

    p01: list[float | None] = []
    p11: list[float | None] = []
    for w in range(n_windows):
        denom = n10[w] + n11[w]
        if denom == 0:
            p01.append(None)
            p11.append(None)
        else:
            p01.append(n10[w] / denom)
            p11.append(n11[w] / denom)
    starts = tuple(t0 + w * window_seconds for w in range(n_windows))
    return DriftSeries(window_starts=starts, p01=tuple(p01), p11=tuple(p11))


def drift_to_csv(series: DriftSeries, path: str) -> None:
    """Write the drift series as window_start,p01,p11 (blank when missing)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start", "p01", "p11"])
        for start, a, b in zip(series.window_starts, series.p01, series.p11):
            writer.writerow([start, "" if a is None else repr(a), "" if b is None else repr(b)])
