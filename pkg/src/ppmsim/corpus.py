"""A corpus of small war-conflict-free capsule programs.

Each entry lays out its own input in a fresh machine and boots processor
0. Used by the idempotence suite, the verification CLI and the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .capsules import capsule
from .machine import Machine
from .memory import WORD_MASK, MachineConfig


@dataclass(frozen=True)
class Program:
    name: str
    setup: Callable  # setup(machine) -> root closure address
    B: int = 1


@capsule("c.copy")
def copy_word(ctx):
    src, dst = ctx.args
    v = yield ctx.read(src)
    yield ctx.write(dst, v)
    yield ctx.ret()


@capsule("c.succ")
def succ(ctx):
    src, dst = ctx.args
    v = yield ctx.read(src)
    yield ctx.write(dst, (v + 1) & WORD_MASK)
    yield ctx.ret()


@capsule("c.swap_into")
def swap_into(ctx):
    a, b, out = ctx.args
    x = yield ctx.read(a)
    y = yield ctx.read(b)
    yield ctx.write(out, y)
    yield ctx.write(out + ctx.B, x)
    yield ctx.ret()


@capsule("c.sum")
def sum_range(ctx):
    src, n, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    yield ctx.write(dst, sum(vals) & WORD_MASK)
    yield ctx.ret()


@capsule("c.block_copy")
def block_copy(ctx):
    src, n, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    yield from ctx.write_range(dst, vals)
    yield ctx.ret()


@capsule("c.reverse")
def reverse_copy(ctx):
    src, n, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    yield from ctx.write_range(dst, vals[::-1])
    yield ctx.ret()


@capsule("c.write_first")
def write_first(ctx):
    """Write a block, read it back, write it again: the first access is a write."""
    (x,) = ctx.args
    yield ctx.write(x, 5)
    v = yield ctx.read(x)
    yield ctx.write(x, v * 3)
    yield ctx.ret()


@capsule("c.max")
def maximum(ctx):
    src, n, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    yield ctx.write(dst, max(vals))
    yield ctx.ret()


@capsule("c.dot")
def dot(ctx):
    a, b, n, dst = ctx.args
    x = yield from ctx.read_range(a, n)
    y = yield from ctx.read_range(b, n)
    yield ctx.write(dst, sum(p * q for p, q in zip(x, y)) & WORD_MASK)
    yield ctx.ret()


@capsule("c.histogram")
def histogram(ctx):
    src, n, k, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    counts = [0] * k
    for v in vals:
        counts[v % k] += 1
    yield from ctx.write_range(dst, counts)
    yield ctx.ret()


@capsule("c.scan")
def scan(ctx):
    src, n, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    acc, out = 0, []
    for v in vals:
        acc = (acc + v) & WORD_MASK
        out.append(acc)
    yield from ctx.write_range(dst, out)
    yield ctx.ret()


@capsule("c.scratch")
def scratch(ctx):
    """Uses ephemeral words; each is written before it is read."""
    src, dst = ctx.args
    v = yield ctx.read(src)
    ctx.local_write(0, v)
    ctx.local_write(1, v * v)
    yield ctx.write(dst, (ctx.local_read(0) + ctx.local_read(1)) & WORD_MASK)
    yield ctx.ret()


@capsule("c.call")
def call_succ(ctx):
    """Persistent call of succ(x), result returned into the continuation closure."""
    src, dst = ctx.args
    k = yield from ctx.closure("c.after_call", [dst, 0], cont=ctx.cont)
    callee = yield from ctx.closure("c.succ_into_closure", [src, k], cont=k)
    yield ctx.install(callee)


@capsule("c.succ_into_closure")
def succ_into_closure(ctx):
    src, k = ctx.args
    v = yield ctx.read(src)
    # result slot is the second argument of the continuation closure
    yield ctx.write(k + 4, (v + 1) & WORD_MASK)
    yield ctx.ret()


@capsule("c.after_call")
def after_call(ctx):
    dst, result = ctx.args
    yield ctx.write(dst, result)
    yield ctx.ret()


@capsule("c.commit_incr")
def commit_incr(ctx):
    """Counter increment split by a commit between the read and the write."""
    (x,) = ctx.args
    v = yield ctx.read(x)
    nxt = yield from ctx.closure("c.store", [x, (v + 1) & WORD_MASK], cont=ctx.cont)
    yield ctx.install(nxt)


@capsule("c.store")
def store(ctx):
    x, v = ctx.args
    yield ctx.write(x, v)
    yield ctx.ret()


@capsule("c.alloc")
def alloc_and_fill(ctx):
    """Allocates two blocks, fills them and records their addresses."""
    src, dst = ctx.args
    v = yield ctx.read(src)
    a = ctx.alloc(4)
    b = ctx.alloc(4)
    yield from ctx.write_range(a, [v] * 4)
    yield from ctx.write_range(b, [v + 1] * 4)
    yield ctx.write(dst, a)
    yield ctx.write(dst + ctx.B, b)
    yield ctx.ret()


@capsule("c.poly")
def poly(ctx):
    coef, n, xaddr, dst = ctx.args
    cs = yield from ctx.read_range(coef, n)
    x = yield ctx.read(xaddr)
    acc = 0
    for c in reversed(cs):
        acc = (acc * x + c) & WORD_MASK
    yield ctx.write(dst, acc)
    yield ctx.ret()


@capsule("c.matvec")
def matvec(ctx):
    mat, vec, n, dst = ctx.args
    a = yield from ctx.read_range(mat, n * n)
    v = yield from ctx.read_range(vec, n)
    out = [sum(a[i * n + j] * v[j] for j in range(n)) & WORD_MASK for i in range(n)]
    yield from ctx.write_range(dst, out)
    yield ctx.ret()


@capsule("c.fill")
def fill(ctx):
    dst, n, v = ctx.args
    yield from ctx.write_range(dst, [v] * n)
    yield ctx.ret()


@capsule("c.branch")
def branch(ctx):
    src, hi, lo = ctx.args
    v = yield ctx.read(src)
    if v > 5:
        yield ctx.write(hi, v)
    else:
        yield ctx.write(lo, v)
    yield ctx.ret()


@capsule("c.gather")
def gather(ctx):
    src, idx, n, dst = ctx.args
    ix = yield from ctx.read_range(idx, n)
    out = []
    for i in ix:
        out.append((yield ctx.read(src + i)))
    yield from ctx.write_range(dst, out)
    yield ctx.ret()


@capsule("c.loop")
def loop(ctx):
    """Tail-recursive countdown; each step is its own capsule."""
    i, acc, dst = ctx.args
    if i == 0:
        yield ctx.write(dst, acc)
        yield ctx.ret()
        return
    nxt = yield from ctx.closure("c.loop", [i - 1, (acc * 31 + i) & WORD_MASK, dst], cont=ctx.cont)
    yield ctx.install(nxt)


@capsule("c.two_phase")
def two_phase(ctx):
    """Reads inputs, writes a temporary, and the next capsule reads the temporary."""
    src, n, tmp, dst = ctx.args
    vals = yield from ctx.read_range(src, n)
    yield from ctx.write_range(tmp, [v ^ 0x55 for v in vals])
    nxt = yield from ctx.closure("c.sum", [tmp, n, dst], cont=ctx.cont)
    yield ctx.install(nxt)


@capsule("c.halt")
def halt(ctx):
    yield ctx.halt()


def _data(m, values):
    a = m.setup_alloc(len(values))
    m.poke(a, values)
    return a


def _out(m, n=1):
    return m.setup_alloc(n)


def _root(m, name, args):
    done = m.setup_closure("c.halt")
    return m.setup_closure(name, args, cont=done)


def _seq(n, mul=37, add=11, mod=1000):
    return [(i * mul + add) % mod for i in range(n)]


PROGRAMS = [
    Program("copy", lambda m: _root(m, "c.copy", [_data(m, [42]), _out(m)])),
    Program("succ", lambda m: _root(m, "c.succ", [_data(m, [41]), _out(m)])),
    Program("swap_into", lambda m: _root(m, "c.swap_into", [_data(m, [1]), _data(m, [2]), _out(m, 2 * m.B)])),
    Program("sum", lambda m: _root(m, "c.sum", [_data(m, _seq(10)), 10, _out(m)])),
    Program("block_copy", lambda m: _root(m, "c.block_copy", [_data(m, _seq(12)), 12, _out(m, 12)]), B=4),
    Program("reverse", lambda m: _root(m, "c.reverse", [_data(m, _seq(9)), 9, _out(m, 9)])),
    Program("write_first", lambda m: _root(m, "c.write_first", [_out(m)])),
    Program("max", lambda m: _root(m, "c.max", [_data(m, _seq(8, 91)), 8, _out(m)])),
    Program("dot", lambda m: _root(m, "c.dot", [_data(m, _seq(6)), _data(m, _seq(6, 13)), 6, _out(m)])),
    Program("histogram", lambda m: _root(m, "c.histogram", [_data(m, _seq(16)), 16, 4, _out(m, 4)]), B=2),
    Program("scan", lambda m: _root(m, "c.scan", [_data(m, _seq(8)), 8, _out(m, 8)])),
    Program("scratch", lambda m: _root(m, "c.scratch", [_data(m, [9]), _out(m)])),
    Program("call", lambda m: _root(m, "c.call", [_data(m, [41]), _out(m)])),
    Program("commit_incr", lambda m: _root(m, "c.commit_incr", [_data(m, [7])])),
    Program("alloc", lambda m: _root(m, "c.alloc", [_data(m, [3]), _out(m, 2 * m.B)]), B=2),
    Program("poly", lambda m: _root(m, "c.poly", [_data(m, [1, 2, 3, 4]), 4, _data(m, [3]), _out(m)])),
    Program("matvec", lambda m: _root(m, "c.matvec", [_data(m, _seq(9)), _data(m, [1, 2, 3]), 3, _out(m, 3)])),
    Program("fill", lambda m: _root(m, "c.fill", [_out(m, 6), 6, 77]), B=2),
    Program("branch_hi", lambda m: _root(m, "c.branch", [_data(m, [8]), _out(m), _out(m)])),
    Program("branch_lo", lambda m: _root(m, "c.branch", [_data(m, [2]), _out(m), _out(m)])),
    Program("gather", lambda m: _root(m, "c.gather", [_data(m, _seq(8)), _data(m, [3, 1, 7, 0]), 4, _out(m, 4)])),
    Program("loop", lambda m: _root(m, "c.loop", [5, 1, _out(m)])),
    Program("two_phase", lambda m: _root(m, "c.two_phase", [_data(m, _seq(5)), 5, _out(m, 5), _out(m)])),
]


def build(program: Program, **machine_kw) -> Machine:
    cfg = MachineConfig(P=1, M=64, Mp=4096, B=program.B)
    m = Machine(cfg, **machine_kw)
    m.boot(0, program.setup(m))
    return m
