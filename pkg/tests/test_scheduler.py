import pytest
from hypothesis import given, strategies as st

from ppmsim.faults import HARD, SOFT, FaultModel
from ppmsim.forkjoin import run_tree
from ppmsim.machine import SeededRandom
from ppmsim.memory import MachineConfig
from ppmsim.scheduler import (EMPTY, JOB, LEGAL, LOCAL, TAG_LIMIT, TAKEN, DequeOverflow, ent,
                              kind, pack_taken, payload, tag, unpack_taken)
from ppmsim.verify import DEQUE_SCENARIOS, helper_equivalence, run_deque_scenario


def _cfg(P, S=16, B=4):
    return MachineConfig(P=P, M=64, Mp=1 << 16, B=B, S=S)


def _ok(r):
    s = r.scheduler
    return s.exactly_once_ok() and not s.violations


@given(st.integers(0, TAG_LIMIT - 1), st.sampled_from([EMPTY, LOCAL, JOB, TAKEN]),
       st.integers(0, (1 << 42) - 1))
def test_entry_fields_roundtrip(t, k, p):
    e = ent(t, k, p)
    assert (tag(e), kind(e), payload(e)) == (t, k, p)
    assert e < 1 << 64


@given(st.integers(0, (1 << 22) - 1), st.integers(0, TAG_LIMIT - 1))
def test_taken_payload_roundtrip(addr, t):
    assert unpack_taken(pack_taken(addr, t)) == (addr, t)


def test_tag_overflow():
    with pytest.raises(DequeOverflow):
        ent(TAG_LIMIT, LOCAL)


def test_legal_transitions_match_the_diagram():
    diagram = {(EMPTY, LOCAL), (LOCAL, EMPTY), (LOCAL, JOB), (LOCAL, TAKEN), (JOB, LOCAL),
               (JOB, TAKEN)}
    assert diagram <= LEGAL
    # clearing an already-empty bottom entry only bumps its tag
    assert LEGAL - diagram == {(EMPTY, EMPTY)}
    assert not any(old == TAKEN for old, _ in LEGAL)


@pytest.mark.parametrize("P", [1, 2, 4, 8])
def test_fault_free_forks_each_popped_once(P):
    r = run_tree(_cfg(P), 31)
    s = r.scheduler
    assert s.forks == 31 == s.jobs_created == s.successful_pops
    assert not s.violations


def test_single_fork_makes_one_job():
    r = run_tree(_cfg(1), 1, log=True)
    assert r.scheduler.jobs_created == 1 and _ok(r)


def _reference(P, forks):
    r = run_tree(_cfg(P), forks)
    return r.out, r.total


def test_soft_fault_at_every_trial_point_of_a_small_tree():
    ref = _reference(2, 3)
    trials = run_tree(_cfg(2), 3).machine.engine.ordinal[0]
    for o in range(trials):
        r = run_tree(_cfg(2), 3, faults=FaultModel(script=[(0, o, SOFT)]))
        assert _ok(r), o
        assert (r.out, r.total) == ref


def test_soft_fault_sweep_on_the_thief():
    ref = _reference(2, 3)
    trials = run_tree(_cfg(2), 3).machine.engine.ordinal[1]
    for o in range(0, trials, 3):
        r = run_tree(_cfg(2), 3, faults=FaultModel(script=[(1, o, SOFT)]))
        assert _ok(r) and (r.out, r.total) == ref


@pytest.mark.parametrize("P", [2, 4])
def test_hard_fault_sweep_recovers_work(P):
    ref = _reference(P, 15)
    trials = run_tree(_cfg(P), 15).machine.engine.ordinal[1]
    step = max(1, trials // 80)
    for o in range(0, trials, step):
        r = run_tree(_cfg(P), 15, faults=FaultModel(script=[(1, o, HARD)]))
        assert _ok(r), o
        assert (r.out, r.total) == ref


def test_all_but_one_processor_die():
    ref = _reference(4, 31)
    r = run_tree(_cfg(4), 31, faults=FaultModel(script=[(1, 40, HARD), (2, 90, HARD),
                                                        (3, 150, HARD)]))
    assert _ok(r) and (r.out, r.total) == ref
    assert [r.machine.engine.isLive(p) for p in range(4)] == [True, False, False, False]


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]))
def test_random_faults_and_schedules(seed, P):
    ref = _reference(P, 15)
    r = run_tree(_cfg(P), 15, seed=0, faults=FaultModel(f=0.02, hard_fraction=0.3, seed=seed),
                 strategy=SeededRandom(seed, activity=0.7))
    assert _ok(r) and (r.out, r.total) == ref


def test_deque_overflow():
    # depth of a 63-fork tree exceeds a 4-entry deque
    with pytest.raises(DequeOverflow):
        run_tree(_cfg(1, S=4), 63)


@pytest.mark.parametrize("sc", DEQUE_SCENARIOS, ids=lambda s: s.name)
def test_exhaustive_deque_scenarios(sc):
    check = run_deque_scenario(sc)
    assert check.ok, check.detail


def test_concurrent_helpers_match_one_helper():
    check = helper_equivalence()
    assert check.ok, check.detail
