"""Capsules, closures and the per-run capsule context.

A capsule body is a generator function ``fn(ctx)`` registered under a
stable key. It talks to persistent memory only by yielding operations
built by the context; the machine executes each operation atomically and
sends the result back::

    @capsule("incr")
    def incr(ctx):
        src, dst = ctx.args
        v = yield ctx.read(src)
        yield ctx.write(dst, v + 1)
        yield ctx.ret()

Every body must end with exactly one install (``ret``, ``jump``,
``install`` or ``halt``). Python locals play the role of ephemeral
memory: they vanish when a fault discards the running generator.

Closure layout, one word each, starting on a block boundary::

    [start key][continuation][argc][arg0 ... arg(argc-1)]
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Iterable

from .memory import ModelViolation, OutOfMemory

NIL = 0

READ, WRITE, CAS_OP, CAM_OP, INSTALL, YIELD, CHOOSE = range(7)
HEADER = 3


@dataclass(frozen=True)
class CapsuleSpec:
    key: int
    name: str
    fn: Callable
    user: bool


class CapsuleRegistry:
    """Stable key -> step procedure. Keys are CRC32 of the capsule name."""

    def __init__(self):
        self.by_key: dict[int, CapsuleSpec] = {}
        self.by_name: dict[str, CapsuleSpec] = {}

    def register(self, name: str, fn: Callable, user: bool = True) -> CapsuleSpec:
        key = zlib.crc32(name.encode()) or 1
        old = self.by_key.get(key)
        if old is not None and old.name != name:
            raise ValueError(f"capsule key collision: {name!r} vs {old.name!r}")
        spec = CapsuleSpec(key, name, fn, user)
        self.by_key[key] = spec
        self.by_name[name] = spec
        return spec

    def key(self, name: str) -> int:
        return self.by_name[name].key

    def __getitem__(self, key: int) -> CapsuleSpec:
        try:
            return self.by_key[key]
        except KeyError:
            raise ModelViolation(f"no capsule registered under key {key}") from None

    def __contains__(self, name):
        return name in self.by_name


REGISTRY = CapsuleRegistry()


def capsule(name: str, user: bool = True, registry: CapsuleRegistry = REGISTRY):
    def deco(fn):
        registry.register(name, fn, user)
        fn.capsule_name = name
        return fn
    return deco


def key_of(name_or_fn) -> int:
    name = getattr(name_or_fn, "capsule_name", name_or_fn)
    return REGISTRY.key(name)


def pack_restart(closure: int, cursor: int) -> int:
    return (closure << 32) | cursor


def unpack_restart(word: int) -> tuple[int, int]:
    return word >> 32, word & 0xFFFFFFFF


class Context:
    """What a capsule run can see: its closure, its processor, its allocator."""

    __slots__ = ("machine", "proc", "base", "key", "cont", "args", "cursor", "B",
                 "created", "joins", "user", "eph", "installed")

    def __init__(self, machine, proc: int, base: int, cursor: int):
        self.machine = machine
        self.proc = proc
        self.base = base
        self.cursor = cursor
        self.B = machine.config.B
        self.key = 0
        self.cont = NIL
        self.args: list[int] = []
        self.created: list[int] = []
        self.joins: list[int] = []
        self.user = True
        self.eph = machine.procs[proc].eph
        self.installed = False

    # single-block primitives
    def read(self, addr: int):
        return (READ, addr, 0)

    def read_block(self, addr: int, n: int):
        return (READ, addr, n)

    def write(self, addr: int, value: int):
        return (WRITE, addr, (value,))

    def write_block(self, addr: int, values):
        return (WRITE, addr, tuple(values))

    def cas(self, addr: int, expected: int, new: int):
        return (CAS_OP, addr, expected, new)

    def cam(self, addr: int, expected: int, new: int):
        return (CAM_OP, addr, expected, new)

    def install(self, closure: int, cursor: int | None = None):
        return (INSTALL, closure, cursor)

    def ret(self):
        return (INSTALL, self.cont, None)

    jump = install

    def halt(self):
        return (INSTALL, NIL, None)

    def yield_(self):
        return (YIELD,)

    def choose(self, n: int):
        return (CHOOSE, n)

    # multi-block helpers
    def read_range(self, addr: int, n: int):
        B = self.B
        out: list[int] = []
        end = addr + n
        while addr < end:
            k = min(B - addr % B, end - addr)
            out.extend((yield (READ, addr, k)))
            addr += k
        return out

    def write_range(self, addr: int, values: Iterable[int]):
        values = tuple(values)
        B = self.B
        i = 0
        while i < len(values):
            k = min(B - (addr + i) % B, len(values) - i)
            yield (WRITE, addr + i, values[i:i + k])
            i += k

    # ephemeral memory (free, logged)
    def local_read(self, i: int) -> int:
        return self.machine.local_access(self, i, None)

    def local_write(self, i: int, v: int) -> None:
        self.machine.local_access(self, i, v)

    # allocation
    def alloc(self, n: int) -> int:
        """Bump-allocate ``n`` words, rounded up to whole blocks."""
        if n <= 0:
            raise ValueError("allocation size must be positive")
        B = self.B
        size = -(-n // B) * B
        addr = self.cursor
        hi = self.machine.pool_end(addr)
        if addr + size > hi:
            raise OutOfMemory(f"processor pool exhausted allocating {n} words at {addr}")
        self.cursor = addr + size
        return addr

    def closure(self, name_or_key, args=(), cont: int = NIL):
        """Allocate and fill a closure; returns its address."""
        key = name_or_key if isinstance(name_or_key, int) else key_of(name_or_key)
        args = list(args)
        addr = self.alloc(HEADER + len(args))
        yield from self.write_range(addr, [key, cont, len(args), *args])
        self.created.append(addr)
        return addr

    def fill_closure(self, addr: int, name_or_key, args=(), cont: int = NIL):
        """Write a closure into a preallocated slot."""
        key = name_or_key if isinstance(name_or_key, int) else key_of(name_or_key)
        args = list(args)
        yield from self.write_range(addr, [key, cont, len(args), *args])

    # oracles and bookkeeping that are not part of the memory model
    def is_live(self, q: int) -> bool:
        return self.machine.engine.live[q]

    def join_meta(self, k: int) -> None:
        self.joins.append(k)

    @property
    def P(self) -> int:
        return self.machine.config.P
