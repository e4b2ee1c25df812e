"""Cost reports and the bound arithmetic checked against them."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Optional, Sequence

CSV_HEADER = ["W", "Wf", "D", "Df", "T", "Tf", "C", "P", "PA"]


@dataclass(frozen=True)
class CostReport:
    W: int
    W_f: int
    D: Optional[int]
    D_f: Optional[int]
    T: int
    T_f: int
    C: int
    P: int
    P_A: float

    def violations(self) -> list[str]:
        out = []
        if self.W_f < self.W:
            out.append("W_f < W")
        if self.T > self.W:
            out.append("T > W")
        if self.T_f > self.W_f:
            out.append("T_f > W_f")
        if self.D is not None and self.D_f is not None and self.D_f < self.D:
            out.append("D_f < D")
        return out

    @property
    def inflation(self) -> float:
        return self.W_f / self.W if self.W else 1.0

    def csv_row(self) -> list[str]:
        def fmt(v):
            return "" if v is None else str(v)
        return [fmt(self.W), fmt(self.W_f), fmt(self.D), fmt(self.D_f), fmt(self.T),
                fmt(self.T_f), fmt(self.C), fmt(self.P), f"{self.P_A:.6f}"]


def write_csv(reports: Iterable[CostReport], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10 ** 12)


def inflation_factor(C: int, f) -> Fraction:
    """Expected work blow-up 1/(1 - C f); exact when ``f`` is a Fraction."""
    cf = C * _as_fraction(f)
    if cf >= 1:
        raise ValueError(f"C*f = {float(cf)} >= 1: the inflation bound is undefined")
    return 1 / (1 - cf)


@dataclass
class InflationVerdict:
    mean_ratio: float
    bound: float
    tolerance: float
    n: int

    @property
    def ok(self) -> bool:
        return self.mean_ratio <= self.bound * (1 + self.tolerance)


def inflation_check(runs: Sequence[CostReport], C: int, f, tolerance: float = 0.1) -> InflationVerdict:
    if not runs:
        raise ValueError("no runs to check")
    bound = float(inflation_factor(C, f))
    mean = statistics.fmean(r.inflation for r in runs)
    return InflationVerdict(mean, bound, tolerance, len(runs))


def ceil_log(base: Fraction, x: Fraction) -> int:
    """Smallest l >= 0 with base**l >= x, for base > 1. Exact."""
    base, x = Fraction(base), Fraction(x)
    if base <= 1:
        raise ValueError("log base must exceed 1")
    l, acc = 0, Fraction(1)
    while acc < x:
        acc *= base
        l += 1
    return l


def restart_bound(W: int, C: int, f, epsilon) -> int:
    """l = ceil(log_{1/(C f)} (2W / epsilon)), the per-capsule replay bound."""
    cf = C * _as_fraction(f)
    eps = _as_fraction(epsilon)
    if W < 1:
        raise ValueError("W must be >= 1")
    if not 0 < eps < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0 < cf < 1:
        raise ValueError("C*f must be in (0, 1)")
    return ceil_log(1 / cf, 2 * W / eps)


def depth_bound(D: int, W: int, C: int, f) -> float:
    """Predicted D_f <= 2 D log_{1/(C f)} W (at epsilon = 2/W)."""
    cf = float(C * _as_fraction(f))
    if not 0 < cf < 1:
        raise ValueError("C*f must be in (0, 1)")
    return 2 * D * math.log(W) / math.log(1 / cf) if W > 1 else 0.0


@dataclass
class TimeBound:
    measured_T_f: int
    predicted: float
    W: int
    D: Optional[int]
    P: int
    P_A: float
    log_term: int


def time_bound_report(report: CostReport, C: int, f) -> TimeBound:
    """Unit-constant form of W/P_A + D (P/P_A) ceil(log_{1/(Cf)} W)."""
    cf = C * _as_fraction(f)
    if cf >= 1:
        raise ValueError("C*f >= 1")
    W = max(report.W, 1)
    if cf == 0:
        log_term = 1
    else:
        log_term = max(1, ceil_log(1 / cf, Fraction(W)))
    PA = report.P_A or 1.0
    predicted = W / PA
    if report.D is not None:
        predicted += report.D * (report.P / PA) * log_term
    return TimeBound(report.T_f, predicted, report.W, report.D, report.P, report.P_A, log_term)
