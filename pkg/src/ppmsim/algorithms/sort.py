"""Samplesort on the capsule runtime.

``ss.rec(X, n, Y)`` sorts ``n`` words at ``X`` into the block-aligned
region ``Y``. Inputs of at most ``M`` words are sorted inside one capsule.
Larger inputs go through these phases, each a parallel loop whose
capsules write whole blocks of their own:

1.  split into ``k`` subarrays of ``q`` words and sort each recursively;
2.  take every ``L``-th key of each sorted subarray (``L = ceil(log2 n)``)
    and sort the sample recursively;
3.  pick ``ceil(sqrt n) - 1`` pivots from the sorted sample by fixed stride;
4.  for every subarray and pivot record how many keys are below the pivot
    and how many are at most the pivot;
5.  count each (bucket, subarray) segment in bucket-major order and take
    an exclusive prefix sum of the counts;
6.  transpose the segments so every bucket is contiguous;
7.  sort the buckets strictly between pivots recursively (buckets of keys
    equal to a pivot are already sorted);
8.  copy the buckets, in order, into ``Y``.

There are ``2*p + 1`` buckets for ``p`` pivots: even bucket ``2j`` holds
keys strictly between pivots ``j-1`` and ``j``; odd bucket ``2j+1`` holds
keys equal to pivot ``j``. Every recursive bucket excludes at least one
input key, so the recursion always shrinks.
"""

from __future__ import annotations

import bisect
import math
from collections import namedtuple

from ..capsules import capsule
from ..memory import WORD_MASK
from .prefix_sum import psum_closure
from .runtime import (AlgoResult, aligned, blocks, deque_capacity,
                      new_machine, pfor_closure, pool_budget, run_forkjoin)

Frame = namedtuple("Frame", "X n Y q L k np T S SS PV LO UP CN G Z BS YB NT R spb nb nc CH GR GB")
FRAME_WORDS = len(Frame._fields)
PAD = WORD_MASK  # sample filler past the end of a short subarray


def plan(n: int, B: int, M: int):
    """(q, L, k): subarray size, sample stride and subarray count for ``n > M``.

    ``q = spb * L`` with ``spb`` about sqrt(n) rounded to whole blocks, so
    each subarray's sample fills whole blocks. For small ``n`` the subarray
    is capped near n/4 so that one level shrinks the problem by a constant
    factor.
    """
    root = math.isqrt(n - 1) + 1
    L = max(1, (n - 1).bit_length())
    while True:
        spb = min(aligned(root, B), aligned(-(-n // (4 * L)), B))
        q = spb * L
        if q < n or L == 1:
            break
        L -= 1
    return q, L, blocks(n, q)


def grain(B: int, M: int) -> int:
    """Items per leaf of the simple parallel loops: about M/B transfers each."""
    return max(B, M // B // B * B)


def _frame(ctx, F):
    return Frame(*(yield from ctx.read_range(F, FRAME_WORDS)))


def _len(f: Frame, i: int) -> int:
    return min(f.q, f.n - i * f.q)


def _real_samples(f: Frame) -> int:
    return (f.k - 1) * f.spb + -(-_len(f, f.k - 1) // f.L)


@capsule("ss.rec")
def rec(ctx):
    X, n, Y = ctx.args
    B, M = ctx.B, ctx.machine.config.M
    if n <= M:
        if n:
            keys = yield from ctx.read_range(X, n)
            yield from ctx.write_range(Y, sorted(keys))
        yield ctx.ret()
        return
    q, L, k = plan(n, B, M)
    spb = q // L
    npv = math.isqrt(n - 1)  # ceil(sqrt n) - 1
    gr = grain(B, M)
    R = aligned(npv, gr)
    nb = 2 * npv + 1
    nc = nb * k
    ch = max(B, M // 2 // B * B)
    # two searches of about L reads per pivot must fit in O(M/B) transfers
    gb = max(B, min(gr, M // (2 * L * B) // B * B))
    T = ctx.alloc(k * q)
    S = ctx.alloc(k * spb)
    SS = ctx.alloc(k * spb)
    PV = ctx.alloc(R)
    LO = ctx.alloc(k * R)
    UP = ctx.alloc(k * R)
    CN = ctx.alloc(nc)
    G = ctx.alloc(nc)
    Z = ctx.alloc(n)
    BS = ctx.alloc(nb)
    YB = ctx.alloc(nb)
    NT = ctx.alloc(aligned(nb, gr))
    F = ctx.alloc(FRAME_WORDS)
    yield from ctx.write_range(F, [X, n, Y, q, L, k, npv, T, S, SS, PV, LO, UP, CN, G, Z, BS, YB, NT,
                                   R, spb, nb, nc, ch, gr, gb])
    nxt = ctx.cont
    nxt = yield from pfor_closure(ctx, 0, blocks(n, ch), "ss.compact", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, blocks(nb, gr), "ss.bucket", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, blocks(nb, gr), "ss.starts", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, blocks(n, ch), "ss.transpose", [F], nxt)
    nxt = yield from psum_closure(ctx, CN, nc, G, "add", True, nxt)
    nxt = yield from pfor_closure(ctx, 0, blocks(nc, gr), "ss.count", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, k * blocks(npv, gb), "ss.bound", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, R // gr, "ss.pivot", [F], nxt)
    nxt = yield from ctx.closure("ss.rec", [S, k * spb, SS], cont=nxt)
    nxt = yield from pfor_closure(ctx, 0, blocks(k * spb, gr), "ss.sample", [F], nxt)
    nxt = yield from pfor_closure(ctx, 0, k, "ss.sub", [F], nxt)
    yield ctx.install(nxt)


@capsule("ss.sub")
def sub(ctx):
    i, F = ctx.args
    f = yield from _frame(ctx, F)
    c = yield from ctx.closure("ss.rec", [f.X + i * f.q, _len(f, i), f.T + i * f.q],
                               cont=ctx.cont)
    yield ctx.install(c)


@capsule("ss.sample")
def sample(ctx):
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    w0 = c * f.GR
    out = []
    for w in range(w0, min(w0 + f.GR, f.k * f.spb)):
        i, j = divmod(w, f.spb)
        pos = j * f.L
        out.append((yield ctx.read(f.T + i * f.q + pos)) if pos < _len(f, i) else PAD)
    yield from ctx.write_range(f.S + w0, out)
    yield ctx.ret()


@capsule("ss.pivot")
def pivot(ctx):
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    ns = _real_samples(f)
    j0 = c * f.GR
    out = []
    for j in range(j0, j0 + f.GR):
        out.append((yield ctx.read(f.SS + (j + 1) * ns // (f.np + 1))) if j < f.np else 0)
    yield from ctx.write_range(f.PV + j0, out)
    yield ctx.ret()


def _count(ctx, base, lo, hi, v, strict):
    """Keys of the sorted range [lo, hi) that are < v (strict) or <= v."""
    while lo < hi:
        mid = (lo + hi) // 2
        x = yield ctx.read(base + mid)
        if x < v or (not strict and x == v):
            lo = mid + 1
        else:
            hi = mid
    return lo


@capsule("ss.bound")
def bound(ctx):
    """Below/at-most counts of one run of pivots within one subarray."""
    t, F = ctx.args
    f = yield from _frame(ctx, F)
    B = ctx.B
    i, c = divmod(t, blocks(f.np, f.GB))
    base, ln = f.T + i * f.q, _len(f, i)
    j0, j1 = c * f.GB, min(c * f.GB + f.GB, f.np)
    pv = yield from ctx.read_range(f.PV + j0, j1 - j0)
    prev = (yield ctx.read(f.PV + j0 - 1)) if j0 else None
    lo = yield from _count(ctx, base, 0, ln, pv[0], True)
    hi = yield from _count(ctx, base, lo, ln, pv[-1], False)
    scan = hi - lo <= ctx.machine.config.M
    keys = (yield from ctx.read_range(base + lo, hi - lo)) if scan else None
    los, ups = [], []
    for v in pv:
        if scan:
            a = lo + bisect.bisect_left(keys, v)
            b = lo + bisect.bisect_right(keys, v)
        else:
            a = yield from _count(ctx, base, lo, hi, v, True)
            b = yield from _count(ctx, base, a, hi, v, False)
        if prev is not None and v == prev:
            a = b
        los.append(a)
        ups.append(b)
        prev = v
    pad = [0] * (-len(los) % B)
    yield from ctx.write_range(f.LO + i * f.R + j0, los + pad)
    yield from ctx.write_range(f.UP + i * f.R + j0, ups + pad)
    yield ctx.ret()


def _segment_start(ctx, f: Frame, b: int, i: int):
    """Offset inside subarray ``i`` where bucket ``b`` begins."""
    j, odd = divmod(b, 2)
    if odd:
        return (yield ctx.read(f.LO + i * f.R + j))
    return (yield ctx.read(f.UP + i * f.R + j - 1)) if j else 0


def _segment_end(ctx, f: Frame, b: int, i: int):
    j, odd = divmod(b, 2)
    if odd:
        return (yield ctx.read(f.UP + i * f.R + j))
    return (yield ctx.read(f.LO + i * f.R + j)) if j < f.np else _len(f, i)


@capsule("ss.count")
def count(ctx):
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    e0 = c * f.GR
    out = []
    for e in range(e0, min(e0 + f.GR, f.nc)):
        b, i = divmod(e, f.k)
        s = yield from _segment_start(ctx, f, b, i)
        t = yield from _segment_end(ctx, f, b, i)
        out.append(t - s)
    yield from ctx.write_range(f.CN + e0, out)
    yield ctx.ret()


def _runs(ctx, table, count, end, p0, p1):
    """(segment, its start, its stop, lo, hi) for the segments covering [p0, p1).

    ``table`` holds ``count`` nondecreasing segment starts beginning at 0;
    segment s spans [table[s], table[s+1]) and the last one ends at
    ``end``. Empty segments are skipped inside already loaded blocks,
    otherwise by binary search.
    """
    B = ctx.B
    cache = {}

    def get(idx):
        a = table + idx
        base = a - a % B
        if base not in cache:
            cache[base] = yield ctx.read_block(base, B)
        return cache[base][a - base]

    def cached(idx):
        a = table + idx
        return a - a % B in cache

    def last_at_most(lo, p):
        hi = count
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if (yield from get(mid)) <= p:
                lo = mid
            else:
                hi = mid
        return lo

    s = yield from last_at_most(0, p0)
    runs, p = [], p0
    while True:
        stop = (yield from get(s + 1)) if s + 1 < count else end
        runs.append((s, (yield from get(s)), stop, p, min(stop, p1)))
        if stop >= p1:
            return runs
        p = stop
        s += 1
        while s + 1 < count and cached(s + 1):
            if (yield from get(s + 1)) > p:
                break
            s += 1
        else:
            if s + 1 < count:
                s = yield from last_at_most(s, p)


@capsule("ss.transpose")
def transpose(ctx):
    """Fill one chunk of the bucket-major array from the sorted subarrays."""
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    p0, p1 = c * f.CH, min(c * f.CH + f.CH, f.n)
    vals = []
    for s, start, _, a, b in (yield from _runs(ctx, f.G, f.nc, f.n, p0, p1)):
        bkt, i = divmod(s, f.k)
        off = yield from _segment_start(ctx, f, bkt, i)
        vals.extend((yield from ctx.read_range(f.T + i * f.q + off + a - start, b - a)))
    yield from ctx.write_range(f.Z + p0, vals)
    yield ctx.ret()


@capsule("ss.starts")
def starts(ctx):
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    b0 = c * f.GR
    out = []
    for b in range(b0, min(b0 + f.GR, f.nb)):
        out.append((yield ctx.read(f.G + b * f.k)))
    yield from ctx.write_range(f.BS + b0, out)
    yield ctx.ret()


@capsule("ss.bucket")
def bucket(ctx):
    """Give every large open-interval bucket of one run its own sorted region.

    Buckets that fit in ephemeral memory are sorted on the fly by
    ``ss.compact``; buckets of keys equal to a pivot need no sorting. A zero
    entry in YB means the bucket is read straight from Z.
    """
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    M = ctx.machine.config.M
    b0, b1 = c * f.GR, min(c * f.GR + f.GR, f.nb)
    bs = yield from ctx.read_range(f.BS + b0, b1 - b0)
    if b1 < f.nb:
        bs.append((yield ctx.read(f.BS + b1)))
    else:
        bs.append(f.n)
    yb, big = [], []
    for b in range(b0, b1):
        size = bs[b - b0 + 1] - bs[b - b0]
        if b % 2 == 0 and size > M:
            yb.append(ctx.alloc(size))
            big.append(b)
        else:
            yb.append(0)
    yield from ctx.write_range(f.YB + b0, yb)
    if not big:
        yield ctx.ret()
        return
    yield from ctx.write_range(f.NT + b0, big)
    loop = yield from pfor_closure(ctx, 0, len(big), "ss.bsort", [F, f.NT + b0], ctx.cont)
    yield ctx.install(loop)


@capsule("ss.bsort")
def bsort(ctx):
    t, F, slot = ctx.args
    f = yield from _frame(ctx, F)
    b = yield ctx.read(slot + t)
    start = yield ctx.read(f.BS + b)
    stop = (yield ctx.read(f.BS + b + 1)) if b + 1 < f.nb else f.n
    dst = yield ctx.read(f.YB + b)
    c = yield from ctx.closure("ss.rec", [f.Z + start, stop - start, dst], cont=ctx.cont)
    yield ctx.install(c)


@capsule("ss.compact")
def compact(ctx):
    c, F = ctx.args
    f = yield from _frame(ctx, F)
    p0, p1 = c * f.CH, min(c * f.CH + f.CH, f.n)
    vals = []
    for b, start, stop, lo, hi in (yield from _runs(ctx, f.BS, f.nb, f.n, p0, p1)):
        src = yield ctx.read(f.YB + b)
        if src:
            vals.extend((yield from ctx.read_range(src + lo - start, hi - lo)))
        elif b % 2:
            vals.extend((yield from ctx.read_range(f.Z + lo, hi - lo)))
        else:
            keys = yield from ctx.read_range(f.Z + start, stop - start)
            vals.extend(sorted(keys)[lo - start:hi - start])
    yield from ctx.write_range(f.Y + p0, vals)
    yield ctx.ret()


def check_machine(M: int, B: int) -> None:
    if M < 64:
        raise ValueError(f"sort needs M >= 64, got {M}")
    if B * B > M:
        raise ValueError(f"sort needs a tall cache (B*B <= M), got B={B}, M={M}")


def sort(values, P=1, M=64, B=4, faults=None, strategy=None, seed=0, log=False,
         Mp=None, S=None, step_budget=None) -> AlgoResult:
    values = list(values)
    check_machine(M, B)
    n = len(values)
    levels = 1 + max(0, math.ceil(math.log(max(n, 2), max(M, 2))))
    S = S or deque_capacity(P)
    # measured pool use peaks near 35 words per key per level at M=64
    Mp = Mp or pool_budget(2 * n + 2 * B, P, B, 40 * n * levels + (1 << 13), S)
    m = new_machine(P, M, B, Mp, S=S, faults=faults, strategy=strategy, seed=seed, log=log,
                    step_budget=step_budget)
    X = m.setup_alloc(max(n, 1))
    Y = m.setup_alloc(max(n, 1))
    m.poke(X, values)
    s = run_forkjoin(m, "ss.rec", (X, n, Y))
    return AlgoResult(m.peek(Y, n) if n else [], m.report(), m, s, {"n": n})
