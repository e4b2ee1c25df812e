"""Two-level memory of the Parallel-PM model.

Persistent memory is a flat array of 64-bit words partitioned into blocks
of ``B`` words; it survives every fault. Each processor owns a small
ephemeral memory and register file that are scrambled on a fault. All
external transfers are counted, local accesses are free.

The access log doubles as the substrate for the idempotence analyses:
:func:`war_conflict_scan` checks a single capsule run, :func:`race_scan`
checks a capsule against the rest of a multi-processor history.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

WORD_MASK = (1 << 64) - 1
N_REGISTERS = 8


class ModelViolation(RuntimeError):
    """A program broke a rule of the model (bad index, double install...)."""


class SchedulerBug(RuntimeError):
    """The driver asked a dead processor to act."""


class OutOfMemory(ModelViolation):
    pass


@dataclass(frozen=True)
class MachineConfig:
    P: int = 1
    M: int = 64
    Mp: int = 1 << 16
    B: int = 1
    S: int = 64

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.M < self.B:
            raise ValueError("M must hold at least one block")
        if self.Mp % self.B:
            raise ValueError("Mp must be a multiple of B")
        if self.S < 2:
            raise ValueError("S must be >= 2")

    @property
    def n_blocks(self) -> int:
        return self.Mp // self.B


def check_word(v: int) -> int:
    if not isinstance(v, int):
        raise ModelViolation(f"not a machine word: {v!r}")
    if v < 0 or v > WORD_MASK:
        raise ModelViolation(f"value {v} does not fit in a 64-bit word")
    return v


class PersistentMemory:
    """Shared word store; content changes only through the machine."""

    def __init__(self, config: MachineConfig):
        self.config = config
        self.B = config.B
        self.words = [0] * config.Mp

    def __len__(self):
        return len(self.words)

    def block_of(self, addr: int) -> int:
        return addr // self.B

    def check_range(self, addr: int, n: int = 1) -> None:
        if addr < 0 or n < 0 or addr + n > len(self.words):
            raise ModelViolation(f"persistent access [{addr}, {addr + n}) out of range")

    def check_block(self, block: int) -> None:
        if block < 0 or block >= self.config.n_blocks:
            raise ModelViolation(f"block {block} out of range (n_blocks={self.config.n_blocks})")

    def read_block(self, block: int) -> list[int]:
        self.check_block(block)
        lo = block * self.B
        return self.words[lo:lo + self.B]

    def write_block(self, block: int, data: Iterable[int]) -> None:
        self.check_block(block)
        data = [check_word(v) for v in data]
        if len(data) != self.B:
            raise ModelViolation(f"block write needs {self.B} words, got {len(data)}")
        lo = block * self.B
        self.words[lo:lo + self.B] = data

    def snapshot(self) -> tuple[int, ...]:
        return tuple(self.words)


class EphemeralMemory:
    """Per-processor scratch memory and registers, lost on any fault.

    A word that has not been written since the last fault is invalid; reading
    it still returns the scrambled pattern, but the read is flagged so that
    well-formedness violations are observable in the log.
    """

    def __init__(self, size: int, n_registers: int = N_REGISTERS):
        self.size = size
        self.words = [0] * size
        self.registers = [0] * n_registers
        self.valid = [False] * size
        self.reg_valid = [False] * n_registers

    def scramble(self, rng: random.Random) -> None:
        self.words = [rng.getrandbits(64) for _ in range(self.size)]
        self.registers = [rng.getrandbits(64) for _ in self.registers]
        self.valid = [False] * self.size
        self.reg_valid = [False] * len(self.registers)

    def read(self, i: int) -> tuple[int, bool]:
        if not 0 <= i < self.size:
            raise ModelViolation(f"ephemeral word {i} out of range")
        return self.words[i], self.valid[i]

    def write(self, i: int, v: int) -> None:
        if not 0 <= i < self.size:
            raise ModelViolation(f"ephemeral word {i} out of range")
        self.words[i] = check_word(v)
        self.valid[i] = True


EXT_READ = "ext-read"
EXT_WRITE = "ext-write"
CAS = "cas"
CAM = "cam"
LOCAL_READ = "local-read"
LOCAL_WRITE = "local-write"
WRITE_KINDS = (EXT_WRITE,)


class Access(NamedTuple):
    ts: int
    proc: int
    capsule: int
    run: int
    kind: str
    index: int  # block index for transfers, word index for cas/cam/local
    addr: int  # first word touched
    value: tuple  # words read or written
    ok: bool = True  # cas/cam success; local-read validity

    def is_write(self) -> bool:
        return self.kind == EXT_WRITE or (self.kind in (CAS, CAM) and self.ok)


class Event(NamedTuple):
    ts: int
    proc: int
    capsule: int
    event: str  # install | restart | fault | hard-fault
    target: int = 0


@dataclass
class AccessLog:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    sched_events: list = field(default_factory=list)
    # capsule id -> [proc, invocation ts, response ts or None]
    windows: dict = field(default_factory=dict)
    closure_of: dict = field(default_factory=dict)  # capsule id -> closure address
    initial_memory: tuple = ()

    def capsules_of(self, closure: int) -> list[int]:
        return [c for c, a in self.closure_of.items() if a == closure]

    def for_capsule(self, capsule: int) -> list[Access]:
        if capsule not in self.windows:
            raise KeyError(f"unknown capsule {capsule}")
        return [r for r in self.records if r.capsule == capsule]

    def write_jsonl(self, fh: IO[str]) -> None:
        rows = []
        for r in self.records:
            rows.append((r.ts, 0, {"proc": r.proc, "capsule": r.capsule, "kind": r.kind,
                                   "index": r.index, "ts": r.ts}))
        for e in self.events:
            rows.append((e.ts, 1, {"proc": e.proc, "capsule": e.capsule, "event": e.event,
                                   "ts": e.ts}))
        for s in self.sched_events:
            rows.append((s["ts"], 2, s))
        rows.sort(key=lambda t: (t[0], t[1]))
        for _, _, row in rows:
            fh.write(json.dumps(row) + "\n")


@dataclass
class WarReport:
    capsule: int
    conflicts: list[int]
    ill_formed: list[int]
    atomics: list[int]

    @property
    def ok(self) -> bool:
        return not self.conflicts and not self.ill_formed


def last_run(records: list[Access]) -> list[Access]:
    if not records:
        return []
    run = max(r.run for r in records)
    return [r for r in records if r.run == run]


def war_conflict_scan(log: AccessLog, capsule: int) -> WarReport:
    """Check the capsule's last (complete) run for WAR conflicts.

    CAS/CAM instructions are listed separately and ignored for the WAR rule;
    a capsule holding one is judged by the CAM-capsule conditions instead.
    """
    first: dict[int, str] = {}
    conflicts: list[int] = []
    local_first: dict[int, str] = {}
    ill: list[int] = []
    atomics: list[int] = []
    for r in last_run(log.for_capsule(capsule)):
        if r.kind == EXT_READ:
            first.setdefault(r.index, "r")
        elif r.kind == EXT_WRITE:
            if first.setdefault(r.index, "w") == "r" and r.index not in conflicts:
                conflicts.append(r.index)
        elif r.kind in (CAS, CAM):
            atomics.append(r.index)
        elif r.kind == LOCAL_READ:
            if local_first.setdefault(r.index, "r") == "r" and r.index not in ill:
                ill.append(r.index)
        elif r.kind == LOCAL_WRITE:
            local_first.setdefault(r.index, "w")
    return WarReport(capsule, conflicts, ill, atomics)


@dataclass
class RaceReport:
    capsule: int
    races: list[tuple[Access, Access]]

    @property
    def ok(self) -> bool:
        return not self.races


def _block(r: Access, B: int) -> int:
    return r.index if r.kind in (EXT_READ, EXT_WRITE) else r.index // B


def race_scan(log: AccessLog, capsule: int, B: int = 1) -> RaceReport:
    """Pairs (own instruction, foreign instruction inside the window) that conflict."""
    if capsule not in log.windows:
        raise KeyError(f"unknown capsule {capsule}")
    proc, t0, t1 = log.windows[capsule]
    t1 = float("inf") if t1 is None else t1
    own = [r for r in log.records if r.capsule == capsule and r.kind not in (LOCAL_READ, LOCAL_WRITE)]
    foreign = [r for r in log.records
               if r.capsule != capsule and r.proc != proc and t0 <= r.ts <= t1
               and r.kind not in (LOCAL_READ, LOCAL_WRITE)]
    by_block: dict[int, list[Access]] = {}
    for r in foreign:
        by_block.setdefault(_block(r, B), []).append(r)
    races = []
    for r in own:
        for o in by_block.get(_block(r, B), ()):
            if r.is_write() or o.is_write():
                races.append((r, o))
    return RaceReport(capsule, races)


@dataclass
class CostCounters:
    """Transfer tallies. ``wasted`` holds transfers of runs cut short by a fault."""

    P: int
    total: list[int] = field(default_factory=list)
    wasted: list[int] = field(default_factory=list)
    restart_charge: list[int] = field(default_factory=list)
    C: int = 0
    capsules: int = 0

    def __post_init__(self):
        self.total = [0] * self.P
        self.wasted = [0] * self.P
        self.restart_charge = [0] * self.P

    @property
    def W_f(self) -> int:
        return sum(self.total)

    @property
    def W(self) -> int:
        return sum(self.total) - sum(self.wasted) - sum(self.restart_charge)

    @property
    def T_f(self) -> int:
        return max(self.total)

    @property
    def T(self) -> int:
        return max(t - w - c for t, w, c in zip(self.total, self.wasted, self.restart_charge))
