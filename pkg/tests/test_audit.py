import copy

import pytest

from ppmsim.audit import audit_deques
from ppmsim.faults import FaultModel
from ppmsim.forkjoin import run_tree
from ppmsim.machine import SeededRandom
from ppmsim.memory import EXT_WRITE, Access, AccessLog, MachineConfig
from ppmsim.scheduler import EMPTY, JOB, LOCAL, TAKEN, ent, kind, tag


@pytest.fixture(scope="module")
def run():
    cfg = MachineConfig(P=4, M=64, Mp=1 << 16, B=4, S=16)
    return run_tree(cfg, 63, seed=2, log=True, faults=FaultModel(f=0.01, hard_fraction=0.2, seed=2),
                    strategy=SeededRandom(2))


def _entry_addr(s, q, i):
    return s.dq_base + q * s.dq_size + (2 + i) * s.B


def _with_write(log, addr, value):
    bad = copy.copy(log)
    bad.records = list(log.records)
    ts = log.records[-1].ts + 1
    bad.records.append(Access(ts, 0, 0, 0, EXT_WRITE, addr // 4, addr, (value,)))
    return bad


def _find(m, s, want):
    for q in range(s.P):
        for i in range(s.S):
            e = m.words[_entry_addr(s, q, i)]
            if kind(e) == want:
                return q, i, e
    raise LookupError(want)


def test_clean_run_audits_clean(run):
    rep = audit_deques(run.machine.log, run.scheduler)
    assert rep.ok, rep.summary()
    assert rep.transitions > 0


def test_taken_entry_rewritten_is_illegal(run):
    m, s = run.machine, run.scheduler
    q, i, e = _find(m, s, TAKEN)
    rep = audit_deques(_with_write(m.log, _entry_addr(s, q, i), ent(tag(e) + 1, LOCAL)), s)
    assert rep.illegal_transitions and not rep.ok


def test_stale_tag_is_illegal(run):
    m, s = run.machine, run.scheduler
    q, i, e = _find(m, s, EMPTY)
    rep = audit_deques(_with_write(m.log, _entry_addr(s, q, i), ent(tag(e), LOCAL)), s)
    assert rep.illegal_transitions


def test_local_above_empty_breaks_order(run):
    m, s = run.machine, run.scheduler
    e = m.words[_entry_addr(s, 0, s.S - 1)]
    assert kind(e) == EMPTY
    rep = audit_deques(_with_write(m.log, _entry_addr(s, 0, s.S - 1), ent(tag(e) + 1, LOCAL)), s)
    assert rep.order_violations and not rep.illegal_transitions


def test_top_moving_back_is_flagged(run):
    m, s = run.machine, run.scheduler
    q = max(range(s.P), key=lambda q: m.words[s.top(q)])
    top = m.words[s.top(q)]
    assert top > 0
    rep = audit_deques(_with_write(m.log, s.top(q), top - 1), s)
    assert rep.pointer_violations


def test_job_to_empty_is_illegal(run):
    m, s = run.machine, run.scheduler
    # fabricate a job at the first empty slot, then clear it directly
    q, i, e = _find(m, s, EMPTY)
    a = _entry_addr(s, q, i)
    log = _with_write(m.log, a, ent(tag(e) + 1, LOCAL))
    log = _with_write(log, a, ent(tag(e) + 2, JOB, 5))
    log = _with_write(log, a, ent(tag(e) + 3, EMPTY))
    rep = audit_deques(log, s)
    assert any("job" in t[-1] and "empty" in t[-1] for t in rep.illegal_transitions)


def test_log_without_image_is_rejected(run):
    with pytest.raises(ValueError):
        audit_deques(AccessLog(), run.scheduler)
