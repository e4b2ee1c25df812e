"""Parallel prefix sums by an up-sweep that stores a tree of block sums and a
down-sweep that pushes offsets back to the leaves.

Leaves are the input blocks (at most ``B`` elements, one capsule each).
Tree node ``k`` (root 1, children 2k and 2k+1) lives in its own block at
``tree + k*B`` so that sibling capsules never share a block.
"""

from __future__ import annotations

from ..capsules import capsule
from ..forkjoin import fork2
from ..memory import WORD_MASK
from .runtime import (AlgoResult, aligned, blocks, deque_capacity, new_machine, pool_budget,
                      run_forkjoin)

OPS = {
    "add": (lambda x, y: (x + y) & WORD_MASK, 0),
    "max": (max, 0),
    "min": (min, WORD_MASK),
    "xor": (lambda x, y: x ^ y, 0),
}
OP_CODES = {name: i for i, name in enumerate(OPS)}
_BY_CODE = list(OPS.values())


def fold(op: int, vals, start=None):
    f, ident = _BY_CODE[op]
    acc = ident if start is None else start
    for v in vals:
        acc = f(acc, v)
    return acc


def tree_words(n: int, B: int) -> int:
    return 4 * max(blocks(n, B), 1) * B


@capsule("ps.up")
def up(ctx):
    lo, hi, node, inp, n, tree, op = ctx.args
    B = ctx.B
    if hi - lo == 1:
        vals = yield ctx.read_block(inp + lo * B, min(B, n - lo * B))
        yield ctx.write(tree + node * B, fold(op, vals))
        yield ctx.ret()
        return
    mid = (lo + hi) // 2
    yield from fork2(ctx, ("ps.up", [lo, mid, 2 * node, inp, n, tree, op]),
                     ("ps.up", [mid, hi, 2 * node + 1, inp, n, tree, op]),
                     ("ps.combine", [node, tree, op]))


@capsule("ps.combine")
def combine(ctx):
    node, tree, op = ctx.args
    B = ctx.B
    a = yield ctx.read(tree + 2 * node * B)
    b = yield ctx.read(tree + (2 * node + 1) * B)
    yield ctx.write(tree + node * B, _BY_CODE[op][0](a, b))
    yield ctx.ret()


@capsule("ps.down")
def down(ctx):
    """``off`` is the fold of everything left of block ``lo``, valid when ``has_off``."""
    lo, hi, node, inp, n, out, tree, op, off, has_off, exclusive = ctx.args
    B = ctx.B
    f, ident = _BY_CODE[op]
    if hi - lo == 1:
        vals = yield ctx.read_block(inp + lo * B, min(B, n - lo * B))
        acc = off if has_off else None
        res = []
        for v in vals:
            if exclusive:
                res.append(ident if acc is None else acc)
            acc = v if acc is None else f(acc, v)
            if not exclusive:
                res.append(acc)
        yield ctx.write_block(out + lo * B, res)
        yield ctx.ret()
        return
    left = yield ctx.read(tree + 2 * node * B)
    roff = f(off, left) if has_off else left
    mid = (lo + hi) // 2
    yield from fork2(ctx, ("ps.down", [lo, mid, 2 * node, inp, n, out, tree, op, off, has_off,
                                       exclusive]),
                     ("ps.down", [mid, hi, 2 * node + 1, inp, n, out, tree, op, roff, 1,
                                  exclusive]),
                     ("alg.nop", []))


@capsule("ps.main")
def main(ctx):
    """Prefix fold of ``inp[0:n]`` into ``out`` using ``tree`` as scratch."""
    inp, n, out, tree, op, exclusive = ctx.args
    if n and inp < out + n and out < inp + n:
        raise ValueError("output region overlaps the input")
    if n == 0:
        yield ctx.ret()
        return
    nb = blocks(n, ctx.B)
    d = yield from ctx.closure("ps.down", [0, nb, 1, inp, n, out, tree, op, 0, 0, exclusive],
                               cont=ctx.cont)
    u = yield from ctx.closure("ps.up", [0, nb, 1, inp, n, tree, op], cont=d)
    yield ctx.install(u)


def psum_closure(ctx, inp, n, out, op="add", exclusive=False, cont=None):
    """Allocate a tree and return a closure computing the prefix fold; for use inside capsules."""
    tree = ctx.alloc(tree_words(n, ctx.B))
    return (yield from ctx.closure("ps.main", [inp, n, out, tree, OP_CODES[op], int(exclusive)],
                                   cont=ctx.cont if cont is None else cont))


def native_prefix(values, op="add", exclusive=False):
    f, ident = OPS[op]
    out, acc = [], None
    for v in values:
        if exclusive:
            out.append(ident if acc is None else acc)
        acc = v if acc is None else f(acc, v)
        if not exclusive:
            out.append(acc)
    return out


def sum_tree_ok(m, tree, n, B, op="add") -> bool:
    """Every internal node of the stored tree equals the fold of its two children."""
    f = OPS[op][0]
    nb = blocks(n, B)
    ok = True

    def visit(lo, hi, node):
        nonlocal ok
        if hi - lo == 1:
            return
        mid = (lo + hi) // 2
        visit(lo, mid, 2 * node)
        visit(mid, hi, 2 * node + 1)
        w = m.words
        if w[tree + node * B] != f(w[tree + 2 * node * B], w[tree + (2 * node + 1) * B]):
            ok = False
    if nb:
        visit(0, nb, 1)
    return ok


def prefix_sum(values, op="add", exclusive=False, P=1, M=64, B=4, faults=None, strategy=None,
               seed=0, log=False, Mp=None, S=None, step_budget=None) -> AlgoResult:
    if op not in OPS:
        raise ValueError(f"unknown operator {op!r}; choose from {sorted(OPS)}")
    values = list(values)
    n = len(values)
    need = 2 * aligned(n, B) + tree_words(n, B)
    S = S or deque_capacity(P)
    # up and down sweeps fork about once per block each; a fork allocates 40 + 8B words at most
    Mp = Mp or pool_budget(need, P, B, 2 * blocks(n, B) * (48 + 8 * B) + (1 << 12), S)
    m = new_machine(P, M, B, Mp, S=S, faults=faults, strategy=strategy, seed=seed, log=log,
                    step_budget=step_budget)
    inp = m.setup_alloc(max(n, 1))
    out = m.setup_alloc(max(n, 1))
    tree = m.setup_alloc(tree_words(n, B))
    m.poke(inp, values)
    s = run_forkjoin(m, "ps.main", (inp, n, out, tree, OP_CODES[op], int(exclusive)))
    return AlgoResult(m.peek(out, n) if n else [], m.report(), m, s,
                      {"tree": tree, "inp": inp, "out": out, "n": n})
