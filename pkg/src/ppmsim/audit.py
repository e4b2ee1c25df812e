"""Offline audit of the work-stealing deques from a finished run's access log.

Replays every successful persistent write that lands on a deque word,
starting from the logged initial memory image, and re-checks the entry
rules independently of the scheduler's online watcher:

* entry kinds only move along the legal transitions and tags grow;
* along each deque, kinds are ordered taken < job < local < empty;
* at most two entries are local at any time;
* ``top`` never decreases and only advances past taken entries.

Only the log is trusted, so the audit also catches a watcher that missed
a write path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .memory import CAM, CAS, EXT_WRITE, AccessLog
from .scheduler import KIND_NAMES, LEGAL, RANK, TAKEN, LOCAL, kind, tag


@dataclass
class AuditReport:
    transitions: int = 0
    illegal_transitions: list = field(default_factory=list)
    order_violations: list = field(default_factory=list)
    pointer_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.illegal_transitions or self.order_violations or self.pointer_violations)

    def summary(self) -> str:
        return (f"{self.transitions} entry writes, {len(self.illegal_transitions)} illegal, "
                f"{len(self.order_violations)} order, {len(self.pointer_violations)} pointer")


def _writes(log: AccessLog):
    """(ts, proc, word, value) for every effective persistent word write."""
    for r in log.records:
        if r.kind == EXT_WRITE:
            for i, v in enumerate(r.value):
                yield r.ts, r.proc, r.addr + i, v
        elif r.kind in (CAS, CAM) and r.ok:
            yield r.ts, r.proc, r.addr, r.value[1]


def audit_deques(log: AccessLog, sched) -> AuditReport:
    """Check the deque rules over ``log`` for the layout of scheduler ``sched``."""
    if not log.initial_memory:
        raise ValueError("the log has no initial memory image; was the run started?")
    B, S, P = sched.B, sched.S, sched.P
    base, size = sched.dq_base, sched.dq_size
    words = list(log.initial_memory[base:base + P * size])
    kinds = [[kind(words[q * size + (2 + i) * B]) for i in range(S)] for q in range(P)]
    locals_ = [row.count(LOCAL) for row in kinds]
    rep = AuditReport()
    for q, row in enumerate(kinds):
        ranks = [RANK[k] for k in row]
        if any(a > b for a, b in zip(ranks, ranks[1:])) or locals_[q] > 2:
            rep.order_violations.append((None, None, q, "initial deque out of order"))
    for ts, p, addr, new in _writes(log):
        off = addr - base
        if not 0 <= off < P * size:
            continue
        q, r = divmod(off, size)
        slot, sub = divmod(r, B)
        old = words[off]
        words[off] = new
        if sub or old == new:
            continue
        if slot == 0:
            if new < old or kinds[q][old] != TAKEN:
                rep.pointer_violations.append((ts, p, q, f"top {old}->{new}"))
            continue
        if slot == 1:
            continue
        i = slot - 2
        rep.transitions += 1
        ko, kn = kind(old), kind(new)
        if (ko, kn) not in LEGAL or tag(new) <= tag(old):
            rep.illegal_transitions.append(
                (ts, p, q, i, f"{KIND_NAMES[ko]}/{tag(old)} -> {KIND_NAMES[kn]}/{tag(new)}"))
        row = kinds[q]
        row[i] = kn
        locals_[q] += (kn == LOCAL) - (ko == LOCAL)
        # the row was checked after every earlier write, so only i's neighbours can break order
        r = RANK[kn]
        if (i > 0 and RANK[row[i - 1]] > r) or (i + 1 < S and r > RANK[row[i + 1]]):
            lo = max(0, i - 2)
            rep.order_violations.append(
                (ts, p, q, i, [KIND_NAMES[k] for k in row[lo:i + 3]]))
        if locals_[q] > 2:
            rep.order_violations.append((ts, p, q, i, "more than two local entries"))
    return rep
