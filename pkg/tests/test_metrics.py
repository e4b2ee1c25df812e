import csv
import io
import math
import statistics
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from ppmsim.faults import FaultModel
from ppmsim.forkjoin import run_tree
from ppmsim.memory import MachineConfig
from ppmsim.metrics import (CSV_HEADER, CostReport, ceil_log, depth_bound, inflation_check,
                            inflation_factor, restart_bound, time_bound_report, write_csv)


def _rep(W, W_f, T=None, T_f=None, D=None, D_f=None, C=4, P=1):
    return CostReport(W=W, W_f=W_f, D=D, D_f=D_f, T=T if T is not None else W,
                      T_f=T_f if T_f is not None else W_f, C=C, P=P, P_A=1.0)


def test_inflation_factor_instances():
    assert inflation_factor(10, 0) == 1
    assert inflation_factor(10, Fraction(1, 20)) == 2
    with pytest.raises(ValueError):
        inflation_factor(10, Fraction(1, 10))


def test_inflation_check_at_zero_rate():
    v = inflation_check([_rep(100, 100)] * 5, 8, 0)
    assert v.mean_ratio == 1.0 and v.bound == 1.0 and v.ok


def test_inflation_check_tolerance_edge():
    # bound 4/3 at C f = 1/4; 10% slack puts the cut at 1.4666...
    assert inflation_check([_rep(300, 440)], 4, Fraction(1, 16)).ok
    assert not inflation_check([_rep(300, 441)], 4, Fraction(1, 16)).ok
    with pytest.raises(ValueError):
        inflation_check([], 4, 0)


def _smallest_power(base: Fraction, x: Fraction) -> int:
    l = 0
    while base ** l < x:
        l += 1
    return l


def test_restart_bound_worked_instance():
    C = 25
    l = restart_bound(1000, C, Fraction(1, 4 * C), Fraction(2, 1000))
    assert l == _smallest_power(Fraction(4), Fraction(10 ** 6)) == 10
    assert math.isclose(math.log(10 ** 6, 4), 9.966, abs_tol=1e-3)


@given(st.integers(1, 10 ** 6), st.integers(1, 64), st.integers(2, 1000), st.data())
def test_restart_bound_is_the_least_power(W, C, inv_cf, data):
    f = Fraction(1, inv_cf * C)
    eps = Fraction(1, data.draw(st.integers(2, 10 ** 4)))
    l = restart_bound(W, C, f, eps)
    target = 2 * W / eps
    assert Fraction(inv_cf) ** l >= target
    assert l == 0 or Fraction(inv_cf) ** (l - 1) < target


@given(st.integers(1, 1000), st.integers(1, 50))
def test_restart_bound_small_rate_limit(W, C):
    eps = Fraction(2, max(W, 3))
    target = 2 * W / eps
    f = 1 / (C * (target + 1))
    assert restart_bound(W, C, f, eps) == 1


def test_restart_bound_domain():
    for args in [(0, 1, Fraction(1, 4), Fraction(1, 2)), (10, 1, Fraction(0), Fraction(1, 2)),
                 (10, 1, Fraction(1, 4), Fraction(1)), (10, 4, Fraction(1, 4), Fraction(1, 2))]:
        with pytest.raises(ValueError):
            restart_bound(*args)
    with pytest.raises(ValueError):
        ceil_log(Fraction(1), Fraction(4))


def test_depth_bound_shape():
    assert depth_bound(5, 1, 4, Fraction(1, 8)) == 0.0
    assert math.isclose(depth_bound(5, 1024, 1, Fraction(1, 2)), 2 * 5 * 10)


def test_csv_layout():
    buf = io.StringIO()
    write_csv([_rep(10, 12, D=3, D_f=4), _rep(5, 5)], buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == CSV_HEADER
    assert rows[1][:6] == ["10", "12", "3", "4", "10", "12"]
    assert rows[2][2:4] == ["", ""]


def test_report_invariants_detect_bad_reports():
    assert _rep(10, 9).violations() == ["W_f < W"]
    assert "T_f > W_f" in _rep(10, 12, T_f=13).violations()
    assert "T > W" in _rep(10, 12, T=11, T_f=11).violations()
    assert _rep(10, 10, D=5, D_f=4).violations() == ["D_f < D"]


CFG = dict(M=64, Mp=1 << 16, B=4, S=16)


def test_time_bound_single_processor_fault_free():
    r = run_tree(MachineConfig(P=1, **CFG), 31).result.report
    tb = time_bound_report(r, r.C, 0)
    assert tb.measured_T_f == r.W
    assert tb.predicted == pytest.approx(r.W + r.D)


def test_time_falls_with_processors():
    t = [run_tree(MachineConfig(P=P, **CFG), 255).result.report.T_f for P in (1, 2, 4, 8)]
    assert all(a >= b for a, b in zip(t, t[1:])), t


def test_time_rises_with_fault_rate():
    C = run_tree(MachineConfig(P=2, **CFG), 63).result.report.C
    means = []
    for cf in (0.0, 0.1, 0.25, 0.5):
        runs = [run_tree(MachineConfig(P=2, **CFG), 63, seed=0,
                         faults=FaultModel(f=cf / C, seed=s) if cf else None).result.report.T_f
                for s in range(20)]
        means.append(statistics.fmean(runs))
    assert all(a <= b for a, b in zip(means, means[1:])), means


@given(st.integers(0, 500), st.sampled_from([1, 2, 4]), st.floats(0, 0.03))
def test_reports_satisfy_invariants(seed, P, f):
    r = run_tree(MachineConfig(P=P, **CFG), 15, faults=FaultModel(f=f, seed=seed))
    rep = r.result.report
    assert not rep.violations()
    assert rep.W_f - rep.W == sum(r.machine.counters.wasted) + sum(r.machine.counters.restart_charge)
