"""Parallel stable merge by dual binary search.

A merge of ``s > B`` elements picks splitter ranks at multiples of
``g ~ s^(2/3)`` (rounded up to whole blocks so each piece of the output
is block aligned), finds each rank's split point with one binary search
in a capsule of its own, then merges the pieces recursively. Pieces of
at most ``B`` elements are merged sequentially in a single capsule.
"""

from __future__ import annotations

import math

from ..capsules import capsule
from .runtime import (AlgoResult, aligned, blocks, deque_capacity,
                      new_machine, pfor_closure, pool_budget, run_forkjoin)


def piece_size(s: int, B: int) -> int:
    g = aligned(math.ceil(s ** (2 / 3)), B)
    return min(g, aligned(-(-s // 2), B))


def merge_lists(a, b):
    """Stable sequential merge; ties take the element of ``a`` first."""
    out, i, j = [], 0, 0
    while i < len(a) and j < len(b):
        if b[j] < a[i]:
            out.append(b[j])
            j += 1
        else:
            out.append(a[i])
            i += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


@capsule("mg.rec")
def rec(ctx):
    ao, la, bo, lb, oo = ctx.args
    B = ctx.B
    s = la + lb
    if s == 0:
        yield ctx.ret()
        return
    if s <= B:
        a = yield from ctx.read_range(ao, la)
        b = yield from ctx.read_range(bo, lb)
        yield from ctx.write_range(oo, merge_lists(a, b))
        yield ctx.ret()
        return
    g = piece_size(s, B)
    k = blocks(s, g)
    sp = ctx.alloc((k + 1) * B)
    pieces = yield from pfor_closure(ctx, 0, k, "mg.piece", [ao, la, bo, lb, oo, g, k, sp],
                                     cont=ctx.cont)
    splits = yield from pfor_closure(ctx, 1, k, "mg.split", [ao, la, bo, lb, g, sp],
                                     cont=pieces)
    yield ctx.install(splits)


def split_point(ctx, ao, la, bo, lb, r):
    """Number of elements of ``a`` among the first ``r`` of the merged output."""
    lo, hi = max(0, r - lb), min(r, la)
    while lo < hi:
        mid = (lo + hi) // 2
        x = yield ctx.read(ao + mid)
        y = yield ctx.read(bo + r - mid - 1)
        if x <= y:
            lo = mid + 1
        else:
            hi = mid
    return lo


@capsule("mg.split")
def split(ctx):
    i, ao, la, bo, lb, g, sp = ctx.args
    x = yield from split_point(ctx, ao, la, bo, lb, i * g)
    yield ctx.write(sp + i * ctx.B, x)
    yield ctx.ret()


@capsule("mg.piece")
def piece(ctx):
    p, ao, la, bo, lb, oo, g, k, sp = ctx.args
    B = ctx.B
    i0 = 0 if p == 0 else (yield ctx.read(sp + p * B))
    i1 = la if p == k - 1 else (yield ctx.read(sp + (p + 1) * B))
    r0, r1 = p * g, min((p + 1) * g, la + lb)
    j0, j1 = r0 - i0, r1 - i1
    c = yield from ctx.closure("mg.rec", [ao + i0, i1 - i0, bo + j0, j1 - j0, oo + r0],
                               cont=ctx.cont)
    yield ctx.install(c)


def _check_sorted(xs, name):
    for i in range(1, len(xs)):
        if xs[i] < xs[i - 1]:
            raise ValueError(f"input {name} is not sorted at position {i}")


def merge(a, b, P=1, M=64, B=4, faults=None, strategy=None, seed=0, log=False, Mp=None,
          S=None, step_budget=None, debug=True) -> AlgoResult:
    a, b = list(a), list(b)
    if debug:
        _check_sorted(a, "a")
        _check_sorted(b, "b")
    n = len(a) + len(b)
    S = S or deque_capacity(P)
    Mp = Mp or pool_budget(3 * n + 3 * B, P, B, 64 * n + (1 << 12), S)
    m = new_machine(P, M, B, Mp, S=S, faults=faults, strategy=strategy, seed=seed, log=log,
                    step_budget=step_budget)
    ao = m.setup_alloc(max(len(a), 1))
    bo = m.setup_alloc(max(len(b), 1))
    oo = m.setup_alloc(max(n, 1))
    m.poke(ao, a)
    m.poke(bo, b)
    s = run_forkjoin(m, "mg.rec", (ao, len(a), bo, len(b), oo))
    return AlgoResult(m.peek(oo, n) if n else [], m.report(), m, s, {"n": n})
