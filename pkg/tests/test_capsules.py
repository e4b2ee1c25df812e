import pytest
from hypothesis import given, strategies as st

from ppmsim import corpus
from ppmsim.capsules import (HEADER, NIL, CapsuleRegistry, capsule, key_of, pack_restart,
                             unpack_restart)
from ppmsim.faults import HARD, SOFT, FaultModel
from ppmsim.machine import RESTART_CHARGE, Machine
from ppmsim.memory import MachineConfig, ModelViolation, OutOfMemory


def _prog(name):
    return next(p for p in corpus.PROGRAMS if p.name == name)


@capsule("t.cap.sum3")
def sum3(ctx):
    src, dst = ctx.args
    a = yield ctx.read(src)
    b = yield ctx.read(src + 1)
    c = yield ctx.read(src + 2)
    yield ctx.write(dst, a + b + c)
    yield ctx.ret()


@capsule("t.cap.twice")
def install_twice(ctx):
    yield ctx.halt()
    yield ctx.halt()


@capsule("t.cap.no_install")
def no_install(ctx):
    yield ctx.read(0)


@capsule("t.cap.bad_install")
def bad_install(ctx):
    yield ctx.install(1 << 30)


@capsule("t.cap.allocs")
def two_allocs(ctx):
    (dst,) = ctx.args
    a = ctx.alloc(4)
    yield ctx.write(a, 1)
    b = ctx.alloc(4)
    yield ctx.write(b, 2)
    yield ctx.write(dst, a)
    yield ctx.write(dst + 1, b)
    yield ctx.ret()


@capsule("t.cap.greedy")
def greedy(ctx):
    ctx.alloc(1 << 20)
    yield ctx.halt()


def _sum3_machine(**kw):
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1), **kw)
    src = m.setup_alloc(3)
    dst = m.setup_alloc(1)
    m.poke(src, [4, 5, 6])
    m.boot(0, m.setup_closure("t.cap.sum3", (src, dst)))
    return m, dst


@given(st.integers(0, (1 << 32) - 1), st.integers(0, (1 << 32) - 1))
def test_restart_record_roundtrip(closure, cursor):
    assert unpack_restart(pack_restart(closure, cursor)) == (closure, cursor)


def test_registry_keys_are_stable_and_nonzero():
    reg = CapsuleRegistry()
    spec = reg.register("anything", lambda ctx: None)
    assert spec.key != NIL
    assert reg.key("anything") == spec.key
    assert key_of("t.cap.sum3") == key_of(sum3)


def test_closure_layout():
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=4))
    c = m.setup_closure("t.cap.sum3", (7, 9), cont=12)
    assert c % 4 == 0
    assert m.peek(c, HEADER + 2) == [key_of("t.cap.sum3"), 12, 2, 7, 9]


def test_soft_fault_restarts_the_installed_capsule():
    want = _sum3_machine()[0].run().memory
    for o in range(6):
        m, dst = _sum3_machine(faults=FaultModel(script=[(0, o, SOFT)]))
        r = m.run()
        assert r.memory == want
        assert r.memory[dst] == 15


def test_three_consecutive_faults_run_four_times():
    base = _sum3_machine()[0].run().report
    # fault each run at its third access: two transfers done, then the fault
    m, _ = _sum3_machine(faults=FaultModel(script=[(0, 2, SOFT), (0, 5, SOFT), (0, 8, SOFT)]))
    r = m.run()
    assert m.max_executions == 4
    assert r.report.W == base.W
    assert r.report.W_f - base.W_f == 3 * (2 + RESTART_CHARGE)


def test_two_installs_in_one_capsule():
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1))
    m.boot(0, m.setup_closure("t.cap.twice"))
    with pytest.raises(ModelViolation):
        m.run()


def test_capsule_must_install():
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1))
    m.boot(0, m.setup_closure("t.cap.no_install"))
    with pytest.raises(ModelViolation):
        m.run()


def test_install_outside_memory():
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1))
    m.boot(0, m.setup_closure("t.cap.bad_install"))
    with pytest.raises(ModelViolation):
        m.run()


def test_persistent_call_returns_into_continuation():
    m = corpus.build(_prog("call"))
    r = m.run()
    dst = m.words[m.restart_addr(0)]  # halted: restart record points at NIL
    assert unpack_restart(dst)[0] == NIL
    assert 42 in r.memory
    ref = r.memory
    for o in range(m.engine.trials):
        assert corpus.build(_prog("call"), faults=FaultModel(script=[(0, o, SOFT)])).run().memory == ref


def test_commit_is_cost_only_without_faults():
    m = corpus.build(_prog("commit_incr"))
    r = m.run()
    assert 8 in r.memory  # counter 7 incremented once
    assert r.report.W_f == r.report.W
    assert m.counters.capsules >= 2


def test_commit_splits_into_idempotent_capsules():
    ref = corpus.build(_prog("commit_incr")).run().memory
    m = corpus.build(_prog("commit_incr"))
    m.run()
    for o in range(m.engine.trials):
        assert corpus.build(_prog("commit_incr"),
                            faults=FaultModel(script=[(0, o, SOFT)])).run().memory == ref


def _alloc_machine(**kw):
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1), **kw)
    dst = m.setup_alloc(2)
    m.boot(0, m.setup_closure("t.cap.allocs", (dst,)))
    return m, dst


def test_bump_allocation_is_contiguous():
    m, dst = _alloc_machine()
    a, b = m.run().memory[dst:dst + 2]
    assert b - a == 4


def test_replay_reuses_allocated_addresses():
    m, dst = _alloc_machine()
    ref = m.run().memory[dst:dst + 2]
    # closure reads take ordinals 0-3; ordinal 5 falls between the two allocations
    for o in range(4, 9):
        m, dst = _alloc_machine(faults=FaultModel(script=[(0, o, SOFT)]))
        assert m.run().memory[dst:dst + 2] == ref


def test_pool_exhaustion():
    m = Machine(MachineConfig(P=1, M=64, Mp=1024, B=1))
    m.boot(0, m.setup_closure("t.cap.greedy"))
    with pytest.raises(OutOfMemory):
        m.run()


def test_hard_fault_stops_the_processor():
    m, _ = _sum3_machine(faults=FaultModel(script=[(0, 1, HARD)], exempt=-1))
    m.run()
    assert not m.engine.isLive(0)
