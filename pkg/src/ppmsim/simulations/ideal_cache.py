"""Ideal-cache programs run as rounds over a no-evict cache of ``2M/B`` blocks.

Programs are state machines like EM programs but issue word accesses::

    ("load", addr, off)   st[off] = mem[addr]
    ("store", addr, off)  mem[addr] = st[off]
    ("halt",)

A round loads each block on first touch and never evicts. When a block
outside a full cache is touched the round closes before that access: the
state goes to the other checkpoint side and the dirty lines, as (address,
block) pairs, go to the persistent buffer for the commit capsule.
"""

from __future__ import annotations

from ..capsules import capsule
from .common import SimResult, build_round_sim, finish_round_sim, round_args, write_buffer
from .em import EmProgram, _check_block, _layout


class IcProgram(EmProgram):
    """Same attributes as :class:`EmProgram`; ``step`` returns word operations."""


def run_native_ic(prog: IcProgram, memory, max_ops: int = 10_000_000):
    """Returns (memory, final state, number of word accesses)."""
    mem = list(memory) + [0] * (prog.mem_words - len(memory))
    st = prog.init_state()
    ops = 0
    while True:
        op = prog.step(st)
        if op[0] == "halt":
            return mem, st, ops
        ops += 1
        if ops > max_ops:
            raise RuntimeError("program did not halt")
        _, addr, off = op
        if not 0 <= addr < len(mem):
            raise IndexError(f"{prog.ident}: address {addr} outside memory")
        if op[0] == "load":
            st[off] = mem[addr]
        else:
            mem[addr] = st[off]


def lru_misses(prog: IcProgram, memory, lines: int) -> int:
    """Misses of a fully associative LRU cache of ``lines`` blocks: a concrete
    stand-in for the ideal-cache miss count, used only to report ratios."""
    from collections import OrderedDict
    mem = list(memory) + [0] * (prog.mem_words - len(memory))
    st = prog.init_state()
    cache: OrderedDict = OrderedDict()
    misses = 0
    while True:
        op = prog.step(st)
        if op[0] == "halt":
            return misses
        _, addr, off = op
        blk = addr // prog.B
        if blk in cache:
            cache.move_to_end(blk)
        else:
            misses += 1
            cache[blk] = True
            if len(cache) > lines:
                cache.popitem(last=False)
        if op[0] == "load":
            st[off] = mem[addr]
        else:
            mem[addr] = st[off]


@capsule("ic.round")
def ic_round(ctx):
    prog, side, mem, nblk, ck, buf, cap, nxt, fin = round_args(ctx)
    B = ctx.B
    st = yield from ctx.read_range(ck[side], prog.state_words)
    cache: dict[int, list] = {}
    dirty = set()
    halted = False
    while True:
        snap = list(st)
        op = prog.step(st)
        if op[0] == "halt":
            halted = True
            break
        _, addr, off = op
        blk, i = divmod(addr, B)
        _check_block(prog, blk, nblk)
        line = cache.get(blk)
        if line is None:
            if len(cache) == cap:
                st = snap
                break
            line = cache[blk] = list((yield ctx.read_block(mem + blk * B, B)))
        if op[0] == "load":
            st[off] = line[i]
        else:
            line[i] = st[off]
            dirty.add(blk)
    yield from ctx.write_range(ck[1 - side], st)
    yield from write_buffer(ctx, _layout(ctx, buf, cap), {b: tuple(cache[b]) for b in dirty})
    yield ctx.install(fin if halted else nxt)


def simulate_ideal_cache(prog: IcProgram, memory, faults=None, seed: int = 0, log: bool = False,
                         strategy=None, step_budget: int = 50_000_000) -> SimResult:
    if prog.M < prog.B:
        raise ValueError("M must hold at least one block")
    cap = 2 * prog.M // prog.B
    m, lay, tr = build_round_sim(prog, memory, "ic.round", cap, faults, seed, log, strategy,
                                 step_budget)
    return finish_round_sim(m, lay, tr, prog, "ic.round")
