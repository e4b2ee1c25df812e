"""Shared plumbing for the fork-join algorithms: parallel for, result type, driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..capsules import HEADER, capsule, unpack_restart
from ..faults import FaultModel
from ..forkjoin import fork2, prepare_forkjoin
from ..machine import Machine
from ..memory import MachineConfig, war_conflict_scan, race_scan
from ..metrics import CostReport
from ..scheduler import ADDR_LIMIT, SLOT_ARGS, SLOTS, WorkStealingScheduler

DEFAULT_MP = 1 << 20


@capsule("alg.nop")
def nop(ctx):
    yield ctx.ret()


@capsule("alg.pfor")
def pfor(ctx):
    """Run ``body(i, *rest)`` for i in [lo, hi) as a balanced binary fork tree."""
    lo, hi, key, *rest = ctx.args
    if hi - lo <= 0:
        yield ctx.ret()
        return
    if hi - lo == 1:
        c = yield from ctx.closure(key, [lo, *rest], cont=ctx.cont)
        yield ctx.install(c)
        return
    mid = (lo + hi) // 2
    yield from fork2(ctx, ("alg.pfor", [lo, mid, key, *rest]),
                     ("alg.pfor", [mid, hi, key, *rest]), ("alg.nop", []))


def pfor_closure(ctx, lo, hi, body: str, args, cont):
    key = ctx.machine.registry.key(body)
    return (yield from ctx.closure("alg.pfor", [lo, hi, key, *args], cont=cont))


def chain(ctx, steps, cont=None):
    """Closures running ``steps`` (name, args) one after another, then ``cont``."""
    nxt = ctx.cont if cont is None else cont
    for name, args in reversed(steps):
        nxt = yield from ctx.closure(name, list(args), cont=nxt)
    return nxt


def blocks(n: int, B: int) -> int:
    return -(-n // B)


def aligned(n: int, B: int) -> int:
    return blocks(n, B) * B


def deque_capacity(P: int) -> int:
    """Default deque length S. Every steal retires one entry for good, so
    multi-processor runs need room for the steals as well as the fork depth."""
    return 64 if P == 1 else 2048


def scheduler_words(P: int, B: int, S: int) -> int:
    """Persistent words the work-stealing scheduler takes during setup."""
    slot = aligned(HEADER + SLOT_ARGS, B)
    return P * (S + 2) * B + P * len(SLOTS) * slot


def pool_budget(setup: int, P: int, B: int, per_proc: int, S: int = 64) -> int:
    """Persistent memory size giving every processor ``per_proc`` pool words."""
    fixed = aligned(setup + B * (P + 1) + scheduler_words(P, B, S) + 1024, B)
    # stay addressable by the scheduler; many processors then share the budget
    room = (ADDR_LIMIT - fixed) // P // B * B
    if room * P < aligned(per_proc, B):
        raise ValueError(f"input needs about {fixed + aligned(per_proc, B)} persistent words, "
                         f"over the {ADDR_LIMIT}-word address space")
    return fixed + P * min(aligned(per_proc, B), room)


def pool_usage(m: Machine) -> int:
    """Largest number of pool words any processor allocated."""
    return max(unpack_restart(m.words[m.restart_addr(p)])[1] - lo
               for p, (lo, _) in enumerate(m.pools))


@dataclass
class AlgoResult:
    output: list
    report: CostReport
    machine: Machine = field(repr=False)
    scheduler: WorkStealingScheduler = field(repr=False)
    info: dict = field(default_factory=dict)

    @property
    def C(self) -> int:
        return self.report.C


def new_machine(P=1, M=64, B=4, Mp=DEFAULT_MP, S=None, faults: Optional[FaultModel] = None,
                strategy=None, seed=0, log=False, step_budget=None) -> Machine:
    kw = dict(faults=faults, seed=seed, log=log)
    if strategy is not None:
        kw["strategy"] = strategy
    if step_budget is not None:
        kw["step_budget"] = step_budget
    S = S or deque_capacity(P)
    return Machine(MachineConfig(P=P, M=M, Mp=Mp, B=B, S=S), **kw)


def run_forkjoin(m: Machine, root: str, args) -> WorkStealingScheduler:
    s = prepare_forkjoin(m, root, args)
    m.run()
    if s.violations:
        raise AssertionError(f"scheduler invariant violated: {s.violations[0]}")
    return s


def capsule_scans(m: Machine) -> tuple[int, int]:
    """(WAR failures, race failures) over the user capsules of a logged run."""
    log = m.log
    if log is None:
        raise ValueError("run the machine with log=True")
    war = race = 0
    user_keys = {k for k, spec in m.registry.by_key.items() if spec.user}
    for cid, closure in log.closure_of.items():
        if log.windows[cid][2] is None:
            continue
        key = m.words[closure] if closure else 0
        if key not in user_keys:
            continue
        if not war_conflict_scan(log, cid).ok:
            war += 1
        if not race_scan(log, cid, m.B).ok:
            race += 1
    return war, race
