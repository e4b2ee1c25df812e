import pytest
from hypothesis import given, strategies as st

from ppmsim.capsules import capsule
from ppmsim.machine import Machine, Scripted
from ppmsim.memory import (EXT_READ, EXT_WRITE, Access, AccessLog, EphemeralMemory,
                           MachineConfig, ModelViolation, PersistentMemory, check_word,
                           race_scan, war_conflict_scan)


@capsule("t.mem.read_at")
def read_at(ctx):
    src, dst = ctx.args
    vals = yield ctx.read_block(src, ctx.B)
    yield from ctx.write_range(dst, vals)
    yield ctx.ret()


@capsule("t.mem.write_at")
def write_at(ctx):
    dst, *vals = ctx.args
    yield ctx.write_block(dst, vals)
    yield ctx.ret()


def test_config_rejects_bad_shapes():
    with pytest.raises(ValueError):
        MachineConfig(P=0)
    with pytest.raises(ValueError):
        MachineConfig(B=8, M=4)
    with pytest.raises(ValueError):
        MachineConfig(B=4, Mp=1022)
    with pytest.raises(ValueError):
        MachineConfig(S=1)


def test_check_word_bounds():
    assert check_word(0) == 0
    assert check_word((1 << 64) - 1) == (1 << 64) - 1
    for bad in (-1, 1 << 64):
        with pytest.raises(ModelViolation):
            check_word(bad)


@given(st.integers(1, 8), st.data())
def test_persistent_block_roundtrip(B, data):
    mem = PersistentMemory(MachineConfig(B=B, M=64, Mp=B * 16))
    blk = data.draw(st.integers(0, 15))
    vals = data.draw(st.lists(st.integers(0, (1 << 64) - 1), min_size=B, max_size=B))
    mem.write_block(blk, vals)
    assert mem.read_block(blk) == vals
    with pytest.raises(ModelViolation):
        mem.read_block(16)


def _machine(P=1, B=2, log=False, strategy=None):
    return Machine(MachineConfig(P=P, M=8, Mp=128, B=B), log=log, strategy=strategy)


def test_ext_read_of_block_zero_counts_one_transfer():
    m = _machine(log=True)
    dst = m.setup_alloc(2)
    m.boot(0, m.setup_closure("t.mem.read_at", (0, dst)))
    m.poke(0, [7, 7])
    r = m.run()
    assert r.memory[dst:dst + 2] == [7, 7]
    reads = [a for a in r.log.records if a.kind == EXT_READ and a.index == 0]
    assert [a.value for a in reads] == [(7, 7)]
    # every logged transfer is charged exactly once
    assert r.report.W_f == len(r.log.records)


def test_write_then_read_back():
    m = _machine()
    a, b = m.setup_alloc(2), m.setup_alloc(2)
    c2 = m.setup_closure("t.mem.read_at", (a, b))
    c1 = m.setup_alloc(5)
    m.poke(c1, [m.registry.key("t.mem.write_at"), c2, 3, a, 1, 2])
    m.boot(0, c1)
    r = m.run()
    assert r.memory[a:a + 2] == [1, 2] and r.memory[b:b + 2] == [1, 2]


def test_single_word_write_with_unit_blocks():
    m = _machine(B=1)
    a = m.setup_alloc(1)
    m.boot(0, m.setup_closure("t.mem.write_at", (a, 9)))
    assert m.run().memory[a] == 9


def test_read_past_end_is_a_model_violation():
    m = _machine()
    dst = m.setup_alloc(2)
    m.boot(0, m.setup_closure("t.mem.read_at", (128, dst)))
    with pytest.raises(ModelViolation):
        m.run()


def test_disjoint_writers_both_visible():
    m = _machine(P=2)
    a = m.setup_alloc(4)
    m.boot(0, m.setup_closure("t.mem.write_at", (a, 1, 2)))
    m.boot(1, m.setup_closure("t.mem.write_at", (a + 2, 3, 4)))
    assert m.run().memory[a:a + 4] == [1, 2, 3, 4]


@pytest.mark.parametrize("first,last", [(0, (3, 4)), (1, (1, 2))])
def test_same_block_last_writer_wins(first, last):
    m = _machine(P=2, strategy=Scripted([first] * 50))
    a = m.setup_alloc(2)
    m.boot(0, m.setup_closure("t.mem.write_at", (a, 1, 2)))
    m.boot(1, m.setup_closure("t.mem.write_at", (a, 3, 4)))
    assert tuple(m.run().memory[a:a + 2]) == last


def test_ephemeral_scramble_invalidates():
    import random
    e = EphemeralMemory(4)
    e.write(2, 5)
    assert e.read(2) == (5, True)
    e.scramble(random.Random(1))
    assert e.read(2)[1] is False
    with pytest.raises(ModelViolation):
        e.read(4)


# -- scans over hand-built logs --------------------------------------------------

def _log(capsule_records, windows):
    log = AccessLog()
    ts = 0
    for cap, proc, kind, blk in capsule_records:
        ts += 1
        log.records.append(Access(ts, proc, cap, 0, kind, blk, blk, (0,)))
    log.windows = dict(windows)
    return log


def _one(kinds):
    recs = [(1, 0, EXT_READ if k == "r" else EXT_WRITE, b) for k, b in kinds]
    return _log(recs, {1: [0, 1, len(recs)]})


def test_war_read_then_write_conflicts():
    assert war_conflict_scan(_one([("r", 3), ("w", 3)]), 1).conflicts == [3]


def test_war_write_first_is_clean():
    assert war_conflict_scan(_one([("w", 3), ("r", 3), ("w", 3)]), 1).ok


def test_war_disjoint_blocks_clean():
    assert war_conflict_scan(_one([("r", 1), ("w", 2)]), 1).ok


def test_war_unknown_capsule():
    with pytest.raises(KeyError):
        war_conflict_scan(_one([("r", 1)]), 9)


@given(st.lists(st.tuples(st.sampled_from("rw"), st.integers(0, 4)), max_size=12))
def test_war_matches_first_access_rule(accesses):
    first = {}
    for k, b in accesses:
        first.setdefault(b, k)
    expected = sorted({b for k, b in accesses if k == "w" and first[b] == "r"})
    assert sorted(war_conflict_scan(_one(accesses), 1).conflicts) == expected


def _race_log(foreign_kind, foreign_ts_after):
    log = AccessLog()
    log.records.append(Access(1, 0, 1, 0, EXT_READ, 5, 5, (0,)))
    ts = 5 if foreign_ts_after else 2
    log.records.append(Access(ts, 1, 2, 0, foreign_kind, 5, 5, (0,)))
    log.windows = {1: [0, 1, 3], 2: [1, ts, ts]}
    return log


def test_race_foreign_write_in_window():
    assert not race_scan(_race_log(EXT_WRITE, False), 1).ok


def test_race_both_read_is_clean():
    assert race_scan(_race_log(EXT_READ, False), 1).ok


def test_race_write_after_response_is_clean():
    assert race_scan(_race_log(EXT_WRITE, True), 1).ok


def test_race_unknown_capsule():
    with pytest.raises(KeyError):
        race_scan(_race_log(EXT_READ, False), 7)
