import pytest
from hypothesis import given, strategies as st

from ppmsim.faults import FaultModel
from ppmsim.memory import EXT_WRITE, war_conflict_scan
from ppmsim.simulations import (EmProgram, IcProgram, RamError, parse_ram, run_native_em,
                                run_native_ic, run_native_ram, simulate_em,
                                simulate_ideal_cache, simulate_ram)
from ppmsim.simulations.ideal_cache import lru_misses
from ppmsim.simulations.programs import EM_CORPUS, IC_CORPUS, RAM_CORPUS

# ten instructions executed once each, no branches
TEN = """
    LOADI r0 3
    LOADI r1 4
    ADD r2 r0 r1
    MUL r3 r2 r2
    LOADI r4 0
    STORE r4 r3
    LOADI r5 1
    LOAD r6 r5
    SUB r7 r6 r0
    HALT
"""


def test_ten_instructions_ten_capsules():
    prog = parse_ram(TEN, "ten")
    mem = [0, 20]
    want, regs, steps = run_native_ram(prog, mem)
    r = simulate_ram(prog, mem)
    assert steps == 10 and r.capsules == 10
    assert r.memory == want
    assert want[0] == 49
    assert r.state[1:] == regs


def test_schedules_keep_ram_memory():
    prog = parse_ram(TEN, "ten")
    want = run_native_ram(prog, [0, 20])[0]
    C = simulate_ram(prog, [0, 20]).report.C
    for s in range(50):
        assert simulate_ram(prog, [0, 20], faults=FaultModel(f=0.25 / C, seed=s), seed=s).memory == want


@pytest.mark.parametrize("src", ["FROB r1 r2", "ADD r1 r2", "LOADI r9 1", "JMP nowhere"])
def test_bad_programs_rejected(src):
    with pytest.raises(RamError):
        parse_ram(src + "\nHALT\n", "bad")


def test_ram_without_halt_hits_step_cap():
    with pytest.raises(RamError):
        run_native_ram(parse_ram("top:\nJMP top\n", "loop"), [0], max_steps=100)


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=12), st.integers(0, 99))
def test_ram_sum_matches_native(values, seed):
    case = next(c for c in RAM_CORPUS if c.name == "sum")
    mem = [len(values), *values] + [0] * 2
    want = run_native_ram(case.program, mem)[0]
    got = simulate_ram(case.program, mem, faults=FaultModel(f=0.05, seed=seed), seed=seed).memory
    assert got == want


class ReadBlocks(EmProgram):
    """Reads blocks 0..k-1 and writes their word sum into block k."""

    def __init__(self, M, B, k, write=True):
        self.ident = f"read{k}-{M}-{B}-{int(write)}"
        self.M, self.B, self.k, self.write = M, B, k, write
        self.mem_words = (k + int(write)) * B
        self.state_words = 2 + B

    def step(self, st):
        i = st[0]
        if i > 0:
            st[1] = (st[1] + sum(st[2:2 + self.B])) & ((1 << 64) - 1)
        if i < self.k:
            st[0] = i + 1
            return ("read", i, 2)
        if i == self.k and self.write:
            st[0] = i + 1
            st[2:2 + self.B] = [st[1]] + [0] * (self.B - 1)
            return ("write", self.k, 2)
        return ("halt",)


class Stream(IcProgram):
    """Loads the first word of each of ``blocks`` blocks."""

    def __init__(self, M, B, blocks):
        self.ident = f"stream{blocks}-{M}-{B}"
        self.M, self.B, self.blocks = M, B, blocks
        self.mem_words = blocks * B
        self.state_words = 2

    def step(self, st):
        i = st[0]
        if i < self.blocks:
            st[0] = i + 1
            return ("load", i * self.B, 1)
        return ("halt",)


def test_em_exactly_one_round_of_reads():
    prog = ReadBlocks(M=16, B=4, k=3)  # 3 reads + 1 write = M/B operations
    mem = list(range(12))
    want = run_native_em(prog, mem)[0]
    r = simulate_em(prog, mem)
    assert r.rounds == 1
    assert r.memory == want and want[12] == sum(range(12))


def test_em_reads_only_round_commits_nothing():
    prog = ReadBlocks(M=16, B=4, k=4, write=False)
    mem = list(range(16))
    r = simulate_em(prog, mem, log=True)
    assert r.rounds == 1
    assert r.memory == mem == run_native_em(prog, mem)[0]
    m, log = r.machine, r.machine.log
    commit = m.registry.key("sim.commit")
    commits = [c for c, a in log.closure_of.items() if m.words[a] == commit]
    restart = {m.restart_addr(p) for p in range(m.P)}
    for c in commits:
        assert [a for a in log.for_capsule(c)
                if a.kind == EXT_WRITE and a.addr not in restart] == []
    assert commits


def test_em_extra_write_spills_into_second_round():
    prog = ReadBlocks(M=16, B=4, k=4)
    mem = list(range(20))
    r = simulate_em(prog, mem)
    assert r.rounds == 2
    assert r.memory == run_native_em(prog, mem)[0]


def test_em_fault_sweep_including_commit():
    prog = ReadBlocks(M=16, B=4, k=6)
    mem = list(range(24))
    want = run_native_em(prog, mem)[0]
    base = simulate_em(prog, mem)
    for o in range(base.machine.engine.trials):
        assert simulate_em(prog, mem, faults=FaultModel(script=[(0, o, "soft")])).memory == want


def test_ic_stream_takes_two_rounds():
    M, B = 16, 4
    prog = Stream(M, B, 4 * M // B)
    mem = list(range(prog.mem_words))
    r = simulate_ideal_cache(prog, mem)
    assert r.rounds == 2
    assert r.memory == run_native_ic(prog, mem)[0]
    assert lru_misses(prog, mem, 2 * M // B) == 4 * M // B


@pytest.mark.parametrize("sim,case", [(simulate_em, c) for c in EM_CORPUS[:4]]
                         + [(simulate_ideal_cache, c) for c in IC_CORPUS[:4]],
                         ids=lambda x: getattr(x, "name", None))
def test_round_capsules_are_war_free(sim, case):
    r = sim(case.program, case.memory, log=True)
    log = r.machine.log
    assert all(war_conflict_scan(log, cid).ok for cid in log.windows)


def test_corpora_are_large_enough():
    assert len(RAM_CORPUS) >= 20 and len(EM_CORPUS) >= 20 and len(IC_CORPUS) >= 20
