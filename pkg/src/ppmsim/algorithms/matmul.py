"""Recursive 8-way matrix multiply with two temporaries per level.

Matrices are row-major with 64-bit wrapping arithmetic. A product of size
``s`` above the base threshold splits every operand into quadrants, runs
the eight quadrant products in parallel (``A[i][0]B[0][j]`` into ``T1``,
``A[i][1]B[1][j]`` into ``T2``) and then adds ``T1 + T2`` into the result
in chunks that fit ephemeral memory. Subproblems of side at most the
largest power of two <= sqrt(M)/2 run inside a single capsule.
"""

from __future__ import annotations

import math

from ..capsules import capsule
from ..memory import WORD_MASK
from .runtime import (AlgoResult, blocks, deque_capacity, new_machine,
                      pfor_closure, pool_budget, run_forkjoin)


def base_side(M: int) -> int:
    """Largest power of two not above sqrt(M)/2."""
    return 1 << max(0, (math.isqrt(M) // 2).bit_length() - 1) if M >= 4 else 1


def add_chunk(M: int, B: int) -> int:
    return max(B, 1 << max(0, (M // 4).bit_length() - 1))


def _read_sub(ctx, addr, ld, s):
    rows = []
    for r in range(s):
        rows.append((yield from ctx.read_range(addr + r * ld, s)))
    return rows


def multiply(a, b):
    """Triple loop, wrapping at 64 bits."""
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) & WORD_MASK for j in range(n)]
            for i in range(n)]


@capsule("mm.rec")
def rec(ctx):
    A, lda, Bm, ldb, C, ldc, s = ctx.args
    n0 = base_side(ctx.machine.config.M)
    if s <= n0:
        a = yield from _read_sub(ctx, A, lda, s)
        b = yield from _read_sub(ctx, Bm, ldb, s)
        c = multiply(a, b)
        for r in range(s):
            yield from ctx.write_range(C + r * ldc, c[r])
        yield ctx.ret()
        return
    T1 = ctx.alloc(s * s)
    T2 = ctx.alloc(s * s)
    adds = yield from pfor_closure(ctx, 0, blocks(s * s, add_chunk(ctx.machine.config.M, ctx.B)),
                                   "mm.add", [T1, T2, C, ldc, s], ctx.cont)
    prods = yield from pfor_closure(ctx, 0, 8, "mm.prod", [A, lda, Bm, ldb, T1, T2, s], adds)
    yield ctx.install(prods)


@capsule("mm.prod")
def prod(ctx):
    t, A, lda, Bm, ldb, T1, T2, s = ctx.args
    h = s // 2
    i, j, k = t >> 2, (t >> 1) & 1, t & 1
    T = T2 if k else T1
    c = yield from ctx.closure("mm.rec", [A + i * h * lda + k * h, lda, Bm + k * h * ldb + j * h,
                                          ldb, T + i * h * s + j * h, s, h], cont=ctx.cont)
    yield ctx.install(c)


@capsule("mm.add")
def add(ctx):
    """C[e] = T1[e] + T2[e] for one chunk of element indices of an s x s block."""
    c, T1, T2, C, ldc, s = ctx.args
    ch = add_chunk(ctx.machine.config.M, ctx.B)
    e, stop = c * ch, min(c * ch + ch, s * s)
    while e < stop:
        r, col = divmod(e, s)
        w = min(s - col, stop - e)
        x = yield from ctx.read_range(T1 + e, w)
        y = yield from ctx.read_range(T2 + e, w)
        yield from ctx.write_range(C + r * ldc + col, [(p + q) & WORD_MASK for p, q in zip(x, y)])
        e += w
    yield ctx.ret()


def _square(m, name):
    n = len(m)
    for row in m:
        if len(row) != n:
            raise ValueError(f"{name} is not square")
    return n


def matmul(a, b, P=1, M=256, B=8, faults=None, strategy=None, seed=0, log=False,
           Mp=None, S=None, step_budget=None) -> AlgoResult:
    n = _square(a, "A")
    if _square(b, "B") != n:
        raise ValueError(f"dimension mismatch: {n}x{n} times {len(b)}x{len(b)}")
    if n == 0:
        raise ValueError("empty matrices")
    side = 1 << (n - 1).bit_length()
    n0 = base_side(M)
    if side > n0 and B > n0:
        raise ValueError(f"block size {B} exceeds the base-case side {n0}; "
                         "quadrant rows would share blocks")
    if side > n0:
        side = max(side, B)
    pad = lambda m: [list(r) + [0] * (side - n) for r in m] + [[0] * side] * (side - n)  # noqa: E731
    words = side * side
    levels = max(1, (side // n0).bit_length())
    S = S or deque_capacity(P)
    Mp = Mp or pool_budget(3 * words + 3 * B, P, B, 8 * words * 2 ** levels + (1 << 12), S)
    m = new_machine(P, M, B, Mp, S=S, faults=faults, strategy=strategy, seed=seed, log=log,
                    step_budget=step_budget)
    A = m.setup_alloc(words)
    Bm = m.setup_alloc(words)
    C = m.setup_alloc(words)
    for r, row in enumerate(pad(a)):
        m.poke(A + r * side, [v & WORD_MASK for v in row])
    for r, row in enumerate(pad(b)):
        m.poke(Bm + r * side, [v & WORD_MASK for v in row])
    s = run_forkjoin(m, "mm.rec", (A, side, Bm, side, C, side, side))
    flat = m.peek(C, words)
    out = [flat[r * side:r * side + n] for r in range(n)]
    base = min(side, n0)
    return AlgoResult(out, m.report(), m, s, {"n": n, "side": side, "base_side": base,
                                               "base_ops": base ** 3})
