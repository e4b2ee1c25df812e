import io

import pytest
from hypothesis import given, strategies as st

from ppmsim import corpus
from ppmsim.capsules import capsule
from ppmsim.explore import atomic_idempotence_check
from ppmsim.faults import FaultModel
from ppmsim.machine import (Machine, MachineTimeout, RoundRobin, Scripted, SeededRandom,
                            make_strategy)
from ppmsim.memory import EXT_READ, EXT_WRITE, MachineConfig
from ppmsim.verify import SCENARIOS, run_scenario


@capsule("t.m.cas")
def cas_into(ctx):
    addr, exp, new, flag = ctx.args
    ok = yield ctx.cas(addr, exp, new)
    yield ctx.write(flag, int(ok))
    yield ctx.ret()


@capsule("t.m.cam")
def cam_only(ctx):
    addr, exp, new = ctx.args
    yield ctx.cam(addr, exp, new)
    yield ctx.ret()


@capsule("t.m.count")
def count_up(ctx):
    ctr, k = ctx.args
    v = yield ctx.read(ctr)
    if k:
        nxt = yield from ctx.closure("t.m.count_store", (ctr, v + 1, k - 1), cont=ctx.cont)
        yield ctx.install(nxt)
    else:
        yield ctx.ret()


@capsule("t.m.count_store")
def count_store(ctx):
    ctr, v, k = ctx.args
    yield ctx.write(ctr, v)
    nxt = yield from ctx.closure("t.m.count", (ctr, k), cont=ctx.cont)
    yield ctx.install(nxt)


@capsule("t.m.spin")
def spin(ctx):
    yield ctx.read(0)
    yield ctx.install(ctx.base)


def _cfg(P=1, B=1):
    return MachineConfig(P=P, M=64, Mp=2048, B=B, S=8)


def _cas_run(initial):
    m = Machine(_cfg())
    w, flag = m.setup_alloc(1), m.setup_alloc(1)
    m.poke(w, [initial])
    m.boot(0, m.setup_closure("t.m.cas", (w, 0, 7, flag)))
    r = m.run()
    return r.memory[w], r.memory[flag]


def test_cas_success():
    assert _cas_run(0) == (7, 1)


def test_cas_failure():
    assert _cas_run(3) == (3, 0)


@pytest.mark.parametrize("first", [0, 1])
def test_cas_race_exactly_one_winner(first):
    m = Machine(_cfg(P=2), strategy=Scripted([first] * 40))
    w, flags = m.setup_alloc(1), m.setup_alloc(2)
    for p in (0, 1):
        m.boot(p, m.setup_closure("t.m.cas", (w, 0, p + 1, flags + p)))
    r = m.run()
    assert sorted(r.memory[flags:flags + 2]) == [0, 1]
    assert r.memory[w] == first + 1


@given(st.integers(0, 50), st.integers(1, 50))
def test_unmatched_cam_leaves_memory(seed, value):
    m = Machine(_cfg(P=2), strategy=SeededRandom(seed), faults=FaultModel(f=0.2, seed=seed))
    w = m.setup_alloc(1)
    m.poke(w, [value])
    for p in (0, 1):
        m.boot(p, m.setup_closure("t.m.cam", (w, value + 1, 0)))
    before = list(m.words)
    r = m.run()
    assert r.memory[w] == value
    assert r.memory[w] == before[w]


def _counter_machine(P, counters, k=5, **kw):
    m = Machine(_cfg(P=P, B=4), **kw)
    addrs = []
    for p in range(counters):
        a = m.setup_alloc(1)
        addrs.append(a)
        m.boot(p, m.setup_closure("t.m.count", (a, k)))
    return m, addrs


def test_single_processor_fault_free_costs():
    m, _ = _counter_machine(1, 1, log=True)
    r = m.run()
    assert r.report.W_f == r.report.W and r.report.T_f == r.report.T
    ts = [a.ts for a in r.log.records]
    assert ts == sorted(ts) and len(set(ts)) == len(ts)
    # the history is program order: capsules complete one after another
    caps = [a.capsule for a in r.log.records]
    assert caps == sorted(caps)


def test_disjoint_counters_equal_separate_runs():
    m2, (a, b) = _counter_machine(2, 2, k=6)
    both = m2.run().memory
    singles = []
    for _ in range(2):
        m1, (c,) = _counter_machine(1, 1, k=6)
        singles.append(m1.run().memory[c])
    assert [both[a], both[b]] == singles == [6, 6]


def _trace(seed):
    m, _ = _counter_machine(2, 2, log=True, seed=seed, strategy=SeededRandom(seed),
                            faults=FaultModel(f=0.1, seed=seed))
    m.run()
    buf = io.StringIO()
    m.log.write_jsonl(buf)
    return buf.getvalue()


@given(st.integers(0, 1000))
def test_identical_inputs_identical_traces(seed):
    assert _trace(seed) == _trace(seed)


def test_step_budget_timeout_keeps_partial_trace():
    m = Machine(_cfg(), step_budget=500, log=True)
    m.boot(0, m.setup_closure("t.m.spin"))
    with pytest.raises(MachineTimeout) as e:
        m.run()
    assert e.value.machine.log.records


def test_strategy_factory():
    assert isinstance(make_strategy("round-robin"), RoundRobin)
    assert isinstance(make_strategy("seeded-random", 3), SeededRandom)
    assert isinstance(make_strategy("scripted", script=[0]), Scripted)
    with pytest.raises(ValueError):
        make_strategy("exhaustive")


def test_faulted_run_keeps_fault_free_work():
    base = corpus.build(corpus.PROGRAMS[3]).run()
    r = corpus.build(corpus.PROGRAMS[3], faults=FaultModel(f=0.3, seed=4)).run()
    assert r.memory == base.memory
    assert r.report.W == base.report.W
    assert r.report.W_f >= r.report.W
    assert not r.report.violations()


def test_checker_accepts_race_free_logged_capsule():
    m = corpus.build(corpus.PROGRAMS[1], log=True)
    r = m.run()
    for cid in r.log.windows:
        if r.log.windows[cid][2] is not None and r.log.for_capsule(cid):
            assert atomic_idempotence_check(r.log, cid, m).ok


@pytest.mark.parametrize("sc", SCENARIOS, ids=lambda s: s.name)
def test_atomicity_scenarios(sc):
    check = run_scenario(sc)
    assert check.ok, check.detail
