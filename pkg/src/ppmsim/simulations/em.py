"""External-memory programs run as rounds of a simulation and a commit capsule.

An EM program is an explicit state machine over at most ``M`` words of
local state. ``step(st)`` mutates ``st`` and returns the next operation::

    ("read", blk, off)    st[off:off+B] = block blk
    ("write", blk, off)   block blk = st[off:off+B]
    ("halt",)

A simulation capsule restores the state from the checkpoint of its side,
runs operations until ``M/B`` reads and writes have been issued (writes go
to an ephemeral buffer that later reads consult first), then saves the
state to the other side and the buffer to persistent memory. The commit
capsule copies the buffer into simulated memory.
"""

from __future__ import annotations

from ..capsules import capsule
from .common import (SimResult, build_round_sim, finish_round_sim, round_args, write_buffer,
                     RoundLayout)


class EmProgram:
    """Base class; subclasses set ``ident``, ``M``, ``B``, ``mem_words``, ``state_words``."""

    ident: str
    M: int
    B: int
    mem_words: int
    state_words: int

    def init_state(self) -> list[int]:
        return [0] * self.state_words

    def step(self, st: list[int]) -> tuple:
        raise NotImplementedError


def run_native_em(prog: EmProgram, memory, max_ops: int = 10_000_000):
    """Returns (memory, final state, number of block transfers)."""
    B = prog.B
    mem = list(memory) + [0] * (prog.mem_words - len(memory))
    st = prog.init_state()
    ios = 0
    while True:
        op = prog.step(st)
        if op[0] == "halt":
            return mem, st, ios
        ios += 1
        if ios > max_ops:
            raise RuntimeError("EM program did not halt")
        _, blk, off = op
        if op[0] == "read":
            st[off:off + B] = mem[blk * B:(blk + 1) * B]
        else:
            mem[blk * B:(blk + 1) * B] = st[off:off + B]


def _check_block(prog, blk, nblk):
    if not 0 <= blk < nblk:
        raise IndexError(f"{prog.ident}: block {blk} outside simulated memory")


@capsule("em.round")
def em_round(ctx):
    prog, side, mem, nblk, ck, buf, cap, nxt, fin = round_args(ctx)
    B = ctx.B
    st = yield from ctx.read_range(ck[side], prog.state_words)
    limit = prog.M // B
    dirty: dict[int, tuple] = {}
    count = 0
    halted = False
    while True:
        snap = list(st)
        op = prog.step(st)
        if op[0] == "halt":
            halted = True
            break
        if count == limit:
            st = snap  # the operation belongs to the next round
            break
        count += 1
        _, blk, off = op
        _check_block(prog, blk, nblk)
        if op[0] == "read":
            data = dirty.get(blk)
            if data is None:
                data = yield ctx.read_block(mem + blk * B, B)
            st[off:off + B] = data
        else:
            dirty[blk] = tuple(st[off:off + B])
    yield from ctx.write_range(ck[1 - side], st)
    lay = _layout(ctx, buf, cap)
    yield from write_buffer(ctx, lay, dirty)
    yield ctx.install(fin if halted else nxt)


def _layout(ctx, buf, cap):
    lay = RoundLayout.__new__(RoundLayout)
    lay.B, lay.buf, lay.cap = ctx.B, buf, cap
    return lay


def simulate_em(prog: EmProgram, memory, faults=None, seed: int = 0, log: bool = False,
                strategy=None, step_budget: int = 50_000_000) -> SimResult:
    """Each round issues at most ``M/B`` block operations; the buffer holds at most that many."""
    if prog.M < prog.B:
        raise ValueError("M must hold at least one block")
    m, lay, tr = build_round_sim(prog, memory, "em.round", prog.M // prog.B, faults, seed, log,
                                 strategy, step_budget)
    return finish_round_sim(m, lay, tr, prog, "em.round")
