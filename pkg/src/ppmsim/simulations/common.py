"""Pieces shared by the simulations: program table, results, round layout and commit."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

from ..capsules import capsule
from ..machine import Machine
from ..metrics import CostReport

# Programs are host code, like capsule bodies; closures refer to them by a
# stable hash so traces do not depend on load order.
_PROGRAMS: dict[int, object] = {}


def register_program(prog) -> int:
    pid = zlib.crc32(prog.ident.encode())
    other = _PROGRAMS.get(pid)
    if other is not None and other.ident != prog.ident:
        raise ValueError(f"program id collision between {other.ident!r} and {prog.ident!r}")
    _PROGRAMS[pid] = prog
    return pid


def program(pid: int):
    return _PROGRAMS[pid]


@dataclass
class SimResult:
    memory: list[int]
    report: CostReport
    machine: Machine = field(repr=False)
    capsules: int = 0  # simulation capsules completed (RAM: instructions executed)
    rounds: int = 0
    state: Optional[list[int]] = None  # final program state / register file
    round_transfers: list[int] = field(default_factory=list)  # fault-free cost per round


@capsule("sim.halt")
def sim_halt(ctx):
    yield ctx.halt()


class RoundLayout:
    """Persistent layout for round-based simulations.

    ``mem``: simulated memory, block j at ``mem + j*B``.
    ``ckpt[s]``: checkpoint side s, one meta word then the program state.
    ``buf``: a count block, then ``cap`` entries of (address block, data block).
    """

    def __init__(self, m: Machine, mem_words: int, state_words: int, cap: int):
        B = m.B
        self.B = B
        self.mem_blocks = -(-mem_words // B)
        self.mem = m.setup_alloc(self.mem_blocks * B)
        self.state_words = state_words
        self.ckpt = (m.setup_alloc(state_words), m.setup_alloc(state_words))
        self.cap = cap
        self.buf = m.setup_alloc(B + 2 * cap * B)

    def entry(self, i: int) -> int:
        return self.buf + self.B + 2 * i * self.B

    @staticmethod
    def words_needed(B: int, mem_words: int, state_words: int, cap: int) -> int:
        blocks = lambda n: -(-n // B)  # noqa: E731
        return B * (blocks(mem_words) + 2 * blocks(state_words) + 1 + 2 * cap)


@capsule("sim.commit")
def commit(ctx):
    """Copy every buffered (address, block) pair into simulated memory.

    Reads only the buffer and writes only simulated memory, so replays are
    harmless.
    """
    buf, mem = ctx.args
    B = ctx.B
    n = yield ctx.read(buf)
    for i in range(n):
        e = buf + B + 2 * i * B
        blk = yield ctx.read(e)
        data = yield ctx.read_block(e + B, B)
        yield ctx.write_block(mem + blk * B, data)
    yield ctx.ret()


def write_buffer(ctx, lay: RoundLayout, dirty: dict):
    """Persist the ephemeral write buffer ``{block: data}`` in block order."""
    if len(dirty) > lay.cap:
        raise AssertionError(f"write buffer holds {len(dirty)} > {lay.cap} entries")
    B = ctx.B
    for i, blk in enumerate(sorted(dirty)):
        e = lay.entry(i)
        yield ctx.write(e, blk)
        yield ctx.write_block(e + B, dirty[blk])
    yield ctx.write(lay.buf, len(dirty))


class TransferTracker:
    """Fault-free transfer count of each completed capsule, by capsule name."""

    def __init__(self, m: Machine):
        self.per_capsule: list[tuple[int, int]] = []
        m.on_install.append(self)

    def __call__(self, m, p, ctx, closure):
        self.per_capsule.append((ctx.key, m.procs[p].exec_transfers))


def new_machine(config, faults, seed, log, strategy) -> Machine:
    kw = dict(faults=faults, seed=seed, log=log)
    if strategy is not None:
        kw["strategy"] = strategy
    return Machine(config, **kw)


# Fault-free transfers of one round (simulation + commit capsule), L = M/B:
#   EM:          header <= 7 and commit header <= 3 for B >= 2, state in and out <= 2L, block ops <= L,
#                buffer out 2L + 1, commit in 2L + 1 and out L, two installs: <= 8L + 14
#   ideal cache: line loads <= 2L, state <= 2L, buffer 4L + 1, commit 4L + 1 and 2L: <= 14L + 14
# With L >= 4 (every corpus program) these give the pinned factors below.
EM_ROUND_FACTOR = 12
IC_ROUND_FACTOR = 18
MIN_BLOCKS_PER_ROUND = 4

ROUND_ARGS = 10  # pid, side, mem, mem_blocks, ckpt0, ckpt1, buf, cap, next_commit, halt_commit


def round_args(ctx):
    pid, side, mem, nblk, ck0, ck1, buf, cap, nxt, fin = ctx.args
    return program(pid), side, mem, nblk, (ck0, ck1), buf, cap, nxt, fin


def build_round_sim(prog, memory, round_capsule: str, cap: int, faults, seed, log, strategy,
                    step_budget: int) -> tuple[Machine, RoundLayout, TransferTracker]:
    """Machine with two round closures (one per checkpoint side) and three commits."""
    from ..capsules import HEADER
    from ..memory import MachineConfig
    B = prog.B
    if len(memory) > prog.mem_words:
        raise ValueError("initial memory larger than the program's declared memory")
    S = prog.state_words
    if S > prog.M:
        raise ValueError(f"program state of {S} words exceeds M={prog.M}")
    hdr = -(-(HEADER + ROUND_ARGS) // B) * B
    need = RoundLayout.words_needed(B, prog.mem_words, S, cap) + 6 * hdr
    Mp = -(-(need + 8 * B) // B) * B + B
    m = new_machine(MachineConfig(P=1, M=4 * prog.M, Mp=Mp, B=B, S=2), faults, seed, log,
                    strategy)
    m.step_budget = step_budget
    lay = RoundLayout(m, prog.mem_words, S, cap)
    m.poke(lay.mem, list(memory))
    m.poke(lay.ckpt[0], prog.init_state())
    pid = register_program(prog)
    halt = m.setup_closure("sim.halt")
    sims = (m.setup_alloc(hdr), m.setup_alloc(hdr))
    commits = [m.setup_closure("sim.commit", [lay.buf, lay.mem], cont=c) for c in (*sims, halt)]
    key = m.registry.key(round_capsule)
    for s in (0, 1):
        m.poke(sims[s], [key, 0, ROUND_ARGS, pid, s, lay.mem, lay.mem_blocks, lay.ckpt[0],
                         lay.ckpt[1], lay.buf, cap, commits[1 - s], commits[2]])
    tracker = TransferTracker(m)
    m.boot(0, sims[0])
    return m, lay, tracker


def finish_round_sim(m: Machine, lay: RoundLayout, tracker: TransferTracker, prog,
                     round_capsule: str) -> SimResult:
    res = m.run()
    rk = m.registry.key(round_capsule)
    ck = m.registry.key("sim.commit")
    rounds, per_round, cur = 0, [], 0
    for key, t in tracker.per_capsule:
        if key == rk:
            rounds += 1
            cur = t
        elif key == ck:
            per_round.append(cur + t)
    side = rounds % 2
    w = res.memory
    state = w[lay.ckpt[side]:lay.ckpt[side] + lay.state_words]
    return SimResult(w[lay.mem:lay.mem + prog.mem_words], res.report, m, capsules=rounds,
                     rounds=rounds, state=state, round_transfers=per_round)
