"""Program corpora for the three simulations, with their inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..memory import WORD_MASK
from .em import EmProgram
from .ideal_cache import IcProgram
from .ram import RamProgram, parse_ram


# -- RAM ------------------------------------------------------------------------

@dataclass(frozen=True)
class RamCase:
    name: str
    program: RamProgram
    memory: tuple


def _ram(name, text, memory):
    return RamCase(name, parse_ram(text, name), tuple(memory))


# memory convention: mem[0] = n, data from mem[1]; results after the data
_SUM = """
    LOADI r1 1
    LOAD r0 r1      # unused read of mem[1], keeps r0 live
    LOADI r2 0      # r2 = address of n
    LOAD r0 r2      # r0 = n
    LOADI r3 0      # acc
    LOADI r4 1      # i
loop:
    LT r5 r0 r4     # n < i ?
    JZ r5 body
    JMP done
body:
    LOAD r6 r4
    ADD r3 r3 r6
    ADD r4 r4 r1
    JMP loop
done:
    STORE r4 r3     # mem[n+1] = sum
    HALT
"""

_MAX = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r3 0
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    JMP done
body:
    LOAD r6 r4
    LT r7 r3 r6
    JZ r7 skip
    MOV r3 r6
skip:
    ADD r4 r4 r1
    JMP loop
done:
    STORE r4 r3
    HALT
"""

_REVERSE = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n
    LOADI r3 1      # lo
    MOV r4 r0       # hi
loop:
    LT r5 r3 r4
    JZ r5 done
    LOAD r6 r3
    LOAD r7 r4
    STORE r3 r7
    STORE r4 r6
    ADD r3 r3 r1
    SUB r4 r4 r1
    JMP loop
done:
    HALT
"""

_PREFIX = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r3 0
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    HALT
body:
    LOAD r6 r4
    ADD r3 r3 r6
    STORE r4 r3
    ADD r4 r4 r1
    JMP loop
"""

_COPY = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n
    LOADI r4 1      # i
    ADD r7 r0 r1    # dst offset = n + 1
loop:
    LT r5 r0 r4
    JZ r5 body
    HALT
body:
    LOAD r6 r4
    ADD r3 r4 r0
    STORE r3 r6     # mem[i + n] = mem[i]
    ADD r4 r4 r1
    JMP loop
"""

_EVENS = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r3 0
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    JMP done
body:
    LOAD r6 r4
    AND r7 r6 r1
    JZ r7 even
    JMP next
even:
    ADD r3 r3 r1
next:
    ADD r4 r4 r1
    JMP loop
done:
    STORE r4 r3
    HALT
"""

_FIB = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # count
    LOADI r3 0      # a
    LOADI r4 1      # b
    LOADI r6 1      # i
loop:
    LT r5 r0 r6
    JZ r5 body
    HALT
body:
    STORE r6 r3
    ADD r7 r3 r4
    MOV r3 r4
    MOV r4 r7
    ADD r6 r6 r1
    JMP loop
"""

_FACT = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n
    LOADI r3 1
loop:
    JZ r0 done
    MUL r3 r3 r0
    SUB r0 r0 r1
    JMP loop
done:
    STORE r1 r3
    HALT
"""

_DOT = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n; a at 1..n, b at n+1..2n
    LOADI r3 0
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    JMP done
body:
    LOAD r6 r4
    ADD r7 r4 r0
    LOAD r7 r7
    MUL r6 r6 r7
    ADD r3 r3 r6
    ADD r4 r4 r1
    JMP loop
done:
    ADD r4 r0 r0
    ADD r4 r4 r1
    STORE r4 r3
    HALT
"""

_BUBBLE = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n
outer:
    LOADI r7 0      # swapped
    LOADI r4 1
inner:
    LT r5 r4 r0     # i < n
    JZ r5 check
    LOAD r2 r4
    ADD r3 r4 r1
    LOAD r6 r3
    LT r5 r6 r2
    JZ r5 noswap
    STORE r4 r6
    STORE r3 r2
    LOADI r7 1
noswap:
    ADD r4 r4 r1
    JMP inner
check:
    JZ r7 done
    JMP outer
done:
    HALT
"""

_HIST = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n; counters at n+1..n+4 by value & 3
    LOADI r4 1
    LOADI r7 3
loop:
    LT r5 r0 r4
    JZ r5 body
    HALT
body:
    LOAD r6 r4
    AND r6 r6 r7
    ADD r6 r6 r0
    ADD r6 r6 r1
    LOAD r3 r6
    ADD r3 r3 r1
    STORE r6 r3
    ADD r4 r4 r1
    JMP loop
"""

_MULADD = """
    LOADI r1 1
    LOADI r2 1
    LOAD r3 r2      # x = mem[1]
    LOADI r2 2
    LOAD r4 r2      # y = mem[2]
    LOADI r5 0
loop:
    JZ r4 done
    ADD r5 r5 r3
    SUB r4 r4 r1
    JMP loop
done:
    LOADI r2 3
    STORE r2 r5
    HALT
"""

_GCD = """
    LOADI r2 1
    LOAD r3 r2
    LOADI r2 2
    LOAD r4 r2
loop:
    SUB r5 r3 r4
    JZ r5 done
    LT r6 r3 r4
    JZ r6 abig
    SUB r4 r4 r3
    JMP loop
abig:
    SUB r3 r3 r4
    JMP loop
done:
    LOADI r2 3
    STORE r2 r3
    HALT
"""

_FIND = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # n
    ADD r2 r0 r1
    LOAD r7 r2      # key at n+1
    LOADI r4 1
    LOADI r3 0
loop:
    LT r5 r0 r4
    JZ r5 body
    JMP done
body:
    LOAD r6 r4
    SUB r6 r6 r7
    JZ r6 found
    ADD r4 r4 r1
    JMP loop
found:
    MOV r3 r4
done:
    ADD r2 r2 r1
    STORE r2 r3
    HALT
"""

_FILL = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r3 77
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    HALT
body:
    STORE r4 r3
    ADD r3 r3 r1
    ADD r4 r4 r1
    JMP loop
"""

_HORNER = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2      # degree+1 coefficients at 1..n, x at n+1
    ADD r2 r0 r1
    LOAD r7 r2
    LOADI r3 0
    MOV r4 r0
loop:
    JZ r4 done
    MUL r3 r3 r7
    LOAD r6 r4
    ADD r3 r3 r6
    SUB r4 r4 r1
    JMP loop
done:
    ADD r2 r2 r1
    STORE r2 r3
    HALT
"""

_COLLATZ = """
    LOADI r1 1
    LOAD r3 r1      # x = mem[1]
    LOADI r4 0      # steps
    LOADI r7 3
loop:
    SUB r5 r3 r1
    JZ r5 done
    AND r6 r3 r1
    JZ r6 even
    MUL r3 r3 r7
    ADD r3 r3 r1
    JMP next
even:
    LOADI r6 0      # halve by repeated subtraction of 2
    LOADI r2 2
half:
    JZ r3 halved
    SUB r3 r3 r2
    ADD r6 r6 r1
    JMP half
halved:
    MOV r3 r6
next:
    ADD r4 r4 r1
    JMP loop
done:
    LOADI r2 2
    STORE r2 r4
    HALT
"""

_SQUARES = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r4 1
loop:
    LT r5 r0 r4
    JZ r5 body
    HALT
body:
    MUL r6 r4 r4
    STORE r4 r6
    ADD r4 r4 r1
    JMP loop
"""

_POW2 = """
    LOADI r1 1
    LOAD r0 r1      # k = mem[1]
    LOADI r3 1
loop:
    JZ r0 done
    ADD r3 r3 r3
    SUB r0 r0 r1
    JMP loop
done:
    LOADI r2 2
    STORE r2 r3
    HALT
"""

_SWAPPAIRS = """
    LOADI r1 1
    LOADI r2 0
    LOAD r0 r2
    LOADI r4 1
loop:
    LT r5 r4 r0
    JZ r5 done
    ADD r3 r4 r1
    LOAD r6 r4
    LOAD r7 r3
    STORE r4 r7
    STORE r3 r6
    ADD r4 r3 r1
    JMP loop
done:
    HALT
"""


def _arr(vals, extra=1):
    return [len(vals), *vals] + [0] * extra


RAM_CORPUS = [
    _ram("sum", _SUM, _arr([3, 1, 4, 1, 5, 9, 2, 6])),
    _ram("max", _MAX, _arr([12, 7, 33, 4, 19])),
    _ram("reverse", _REVERSE, _arr([1, 2, 3, 4, 5, 6, 7], 0)),
    _ram("prefix", _PREFIX, _arr([5, 4, 3, 2, 1], 0)),
    _ram("copy", _COPY, _arr([9, 8, 7, 6], 5)),
    _ram("evens", _EVENS, _arr([2, 3, 4, 5, 6, 8, 11])),
    _ram("fib", _FIB, [10] + [0] * 10),
    _ram("fact", _FACT, [12, 0]),
    _ram("dot", _DOT, [4, 1, 2, 3, 4, 5, 6, 7, 8, 0]),
    _ram("bubble", _BUBBLE, _arr([5, 1, 4, 2, 3], 1)),
    _ram("hist", _HIST, _arr([0, 1, 2, 3, 5, 6, 7, 9, 13], 4)),
    _ram("muladd", _MULADD, [0, 7, 6, 0]),
    _ram("gcd", _GCD, [0, 84, 36, 0]),
    _ram("find", _FIND, _arr([4, 8, 15, 16, 23, 42], 0) + [23, 0]),
    _ram("fill", _FILL, _arr([0] * 6, 0)),
    _ram("horner", _HORNER, [4, 1, 0, 2, 3, 5, 0]),
    _ram("collatz", _COLLATZ, [0, 6, 0]),
    _ram("squares", _SQUARES, _arr([0] * 7, 0)),
    _ram("pow2", _POW2, [0, 9, 0]),
    _ram("swap_pairs", _SWAPPAIRS, _arr([1, 2, 3, 4, 5, 6], 1)),
]


# -- EM and ideal-cache ---------------------------------------------------------------

class Kernel:
    """Iteration template: for i in range(n): reads(i), compute(i, st), writes(i).

    State words: ``[i, j, scalars..., slots...]``. Operation ``k`` of an
    iteration uses slot ``k`` (B words for EM, one word for ideal-cache).
    """

    word_ops = False

    def __init__(self, ident, M, B, n, reads, writes, compute, scalars=1, slots=2,
                 mem_words=0, init=None):
        self.ident = ident
        self.M, self.B, self.n = M, B, n
        self._reads, self._writes, self._compute = reads, writes, compute
        self.scalars = scalars
        self.slot_size = 1 if self.word_ops else B
        self.base = 2 + scalars
        self.state_words = self.base + slots * self.slot_size
        self.mem_words = mem_words
        self._init = init or []

    def init_state(self):
        st = [0] * self.state_words
        st[2:2 + len(self._init)] = self._init
        return st

    def slot(self, k):
        return self.base + k * self.slot_size

    def get(self, st, k):
        o = self.slot(k)
        return st[o:o + self.slot_size]

    def put(self, st, k, vals):
        o = self.slot(k)
        st[o:o + self.slot_size] = [v & WORD_MASK for v in vals]

    def step(self, st):
        rd_op, wr_op = ("load", "store") if self.word_ops else ("read", "write")
        while True:
            i, j = st[0], st[1]
            if i >= self.n:
                return ("halt",)
            rd = self._reads(i)
            if j < len(rd):
                st[1] = j + 1
                return (rd_op, rd[j], self.slot(j))
            wr = self._writes(i)
            if j == len(rd):
                self._compute(self, i, st)
                st[1] = j + 1
                continue
            k = j - len(rd) - 1
            if k < len(wr):
                st[1] = j + 1
                return (wr_op, wr[k], self.slot(k))
            st[0], st[1] = i + 1, 0


class EmKernel(Kernel, EmProgram):
    pass


class IcKernel(Kernel, IcProgram):
    word_ops = True


@dataclass(frozen=True)
class SimCase:
    name: str
    program: object
    memory: tuple


def _seq(n, mul=37, add=11, mod=1000):
    return tuple((i * mul + add) % mod for i in range(n))


# compute callbacks receive (kernel, i, st); the scalar area starts at st[2]

def _c_id(k, i, st):
    pass


def _c_map(a, b):
    def f(k, i, st):
        k.put(st, 0, [a * x + b for x in k.get(st, 0)])
    return f


def _c_prefix(k, i, st):
    out, acc = [], st[2]
    for x in k.get(st, 0):
        acc = (acc + x) & WORD_MASK
        out.append(acc)
    st[2] = acc
    k.put(st, 0, out)


def _c_rev(k, i, st):
    k.put(st, 0, k.get(st, 0)[::-1])


def _c_add(k, i, st):
    k.put(st, 0, [x + y for x, y in zip(k.get(st, 0), k.get(st, 1))])


def _c_raw(k, i, st):
    # iteration i (>0) read back the block written by iteration i-1 into slot 0
    k.put(st, 0, [x * 3 + i for x in k.get(st, 0)])


def _c_sum_em(n):
    def f(k, i, st):
        st[2] = (st[2] + sum(k.get(st, 0))) & WORD_MASK
        if i == n - 1:
            k.put(st, 0, [st[2]] + [0] * (k.slot_size - 1))
    return f


def em_scan(n, M, B, tag=""):
    prog = EmKernel(f"em-scan-{n}-{M}-{B}", M, B, n, lambda i: [i],
                    lambda i: [n] if i == n - 1 else [], _c_sum_em(n), mem_words=(n + 1) * B)
    return SimCase(f"em_scan{tag}", prog, _seq(n * B))


def _em(name, M, B, n_iter, reads, writes, compute, mem_blocks, data, slots=2, scalars=1):
    prog = EmKernel(f"em-{name}-{M}-{B}-{n_iter}", M, B, n_iter, reads, writes, compute,
                    scalars=scalars, slots=slots, mem_words=mem_blocks * B)
    return SimCase(f"em_{name}", prog, tuple(data))


def _em_corpus():
    out = []
    for n, M, B in ((12, 16, 4), (30, 32, 4)):
        out.append(em_scan(n, M, B, f"_{n}"))
    for n, M, B in ((10, 16, 4), (24, 32, 8)):
        out.append(_em(f"copy_{n}", M, B, n, lambda i: [i], lambda i, n=n: [n + i], _c_id,
                       2 * n, _seq(n * B)))
    for n, M, B, a in ((9, 16, 4, 3), (16, 16, 2, 5), (20, 32, 4, 7)):
        out.append(_em(f"map_{n}_{a}", M, B, n, lambda i: [i], lambda i: [i], _c_map(a, 1),
                       n, _seq(n * B)))
    for n, M, B in ((8, 8, 2), (15, 16, 4), (22, 32, 4)):
        out.append(_em(f"prefix_{n}", M, B, n, lambda i: [i], lambda i: [i], _c_prefix,
                       n, _seq(n * B, 13)))
    for n, M, B in ((9, 16, 4), (14, 16, 2)):
        out.append(_em(f"reverse_{n}", M, B, n, lambda i: [i],
                       lambda i, n=n: [2 * n - 1 - i], _c_rev, 2 * n, _seq(n * B)))
    for n, M, B in ((10, 16, 4), (18, 16, 2), (25, 32, 4)):
        # iteration 0 reads block 0; iteration i>0 rereads the block written just before
        out.append(_em(f"raw_{n}", M, B, n, lambda i, n=n: [0] if i == 0 else [n + i - 1],
                       lambda i, n=n: [n + i], _c_raw, 2 * n + 1, _seq(B * 2)))
    for n, M, B, s in ((11, 16, 4, 3), (16, 32, 4, 5)):
        out.append(_em(f"gather_{n}_{s}", M, B, n, lambda i, n=n, s=s: [(i * s) % n],
                       lambda i, n=n: [n + i], _c_id, 2 * n, _seq(n * B, 7)))
    for n, M, B in ((8, 16, 4), (12, 16, 2), (20, 32, 4)):
        out.append(_em(f"add_{n}", M, B, n, lambda i, n=n: [i, n + i],
                       lambda i, n=n: [2 * n + i], _c_add, 3 * n, _seq(2 * n * B, 17)))
    return out


def _ic(name, M, B, n_iter, reads, writes, compute, mem_words, data, slots=2, scalars=2):
    prog = IcKernel(f"ic-{name}-{M}-{B}-{n_iter}", M, B, n_iter, reads, writes, compute,
                    scalars=scalars, slots=slots, mem_words=mem_words)
    return SimCase(f"ic_{name}", prog, tuple(data))


def _w_sum(k, i, st):
    st[2] = (st[2] + k.get(st, 0)[0]) & WORD_MASK


def _w_map(a):
    return lambda k, i, st: k.put(st, 0, [a * k.get(st, 0)[0] + 1])


def _w_prefix(k, i, st):
    st[2] = (st[2] + k.get(st, 0)[0]) & WORD_MASK
    k.put(st, 0, [st[2]])


def _w_add(k, i, st):
    k.put(st, 0, [k.get(st, 0)[0] + k.get(st, 1)[0]])


def ic_scan(blocks, M, B):
    """Read-only streaming scan; the sum stays in the program state."""
    n = blocks * B
    return _ic(f"scan_{blocks}", M, B, n, lambda i: [i], lambda i: [], _w_sum, n, _seq(n))


def _ic_corpus():
    out = []
    for blocks, M, B in ((16, 16, 4), (24, 16, 2)):
        out.append(ic_scan(blocks, M, B))
    for n, M, B in ((40, 16, 4), (30, 8, 2)):
        out.append(_ic(f"copy_{n}", M, B, n, lambda i: [i], lambda i, n=n: [n + i], _c_id,
                       2 * n, _seq(n)))
    for n, M, B in ((36, 16, 4), (50, 16, 2)):
        out.append(_ic(f"map_{n}", M, B, n, lambda i: [i], lambda i: [i], _w_map(5), n, _seq(n)))
    for n, M, B in ((33, 16, 4), (45, 8, 2)):
        out.append(_ic(f"prefix_{n}", M, B, n, lambda i: [i], lambda i: [i], _w_prefix, n,
                       _seq(n, 13)))
    for n, M, B in ((30, 16, 4), (27, 8, 2)):
        out.append(_ic(f"reverse_{n}", M, B, n, lambda i: [i], lambda i, n=n: [2 * n - 1 - i],
                       _c_id, 2 * n, _seq(n)))
    for k, M, B in ((6, 16, 4), (8, 16, 2)):
        n = k * k
        out.append(_ic(f"transpose_{k}", M, B, n, lambda i: [i],
                       lambda i, k=k, n=n: [n + (i % k) * k + i // k], _c_id, 2 * n, _seq(n)))
    for n, s, M, B in ((40, 7, 16, 4), (36, 5, 8, 2)):
        out.append(_ic(f"stride_{n}_{s}", M, B, n, lambda i, n=n, s=s: [(i * s) % n],
                       lambda i: [], _w_sum, n, _seq(n)))
    for r, c, M, B in ((6, 8, 16, 4), (5, 6, 8, 2)):
        # y[row] = sum_j A[row][j] * x[j]; A row-major at 0, x after A, y after x
        def mv_reads(i, c=c, r=r):
            return [i, r * c + i % c]

        def mv_compute(k, i, st, c=c):
            if i % c == 0:
                st[2] = 0
            st[2] = (st[2] + k.get(st, 0)[0] * k.get(st, 1)[0]) & WORD_MASK
            k.put(st, 0, [st[2]])

        out.append(_ic(f"matvec_{r}x{c}", M, B, r * c, mv_reads,
                       lambda i, c=c, r=r: [r * c + c + i // c] if i % c == c - 1 else [],
                       mv_compute, r * c + c + r, _seq(r * c + c, 3, 1, 10)))
    for n, passes, M, B in ((8, 5, 16, 4), (12, 4, 8, 2)):
        out.append(_ic(f"passes_{n}x{passes}", M, B, n * passes, lambda i, n=n: [i % n],
                       lambda i, n=n: [i % n], _w_map(3), n, _seq(n)))
    for n, M, B in ((24, 16, 4), (20, 8, 2)):
        out.append(_ic(f"add_{n}", M, B, n, lambda i, n=n: [i, n + i],
                       lambda i, n=n: [2 * n + i], _w_add, 3 * n, _seq(2 * n, 17)))
    return out


EM_CORPUS = _em_corpus()
IC_CORPUS = _ic_corpus()
