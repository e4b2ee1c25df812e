"""The Parallel-PM executor.

Processors are virtual: the machine owns every generator and advances one
processor by one operation per step, so a run is a deterministic function
of (program, fault model, strategy). Interleaving is chosen per round by
an :class:`InterleavingStrategy`; the exhaustive explorer in
:mod:`ppmsim.explore` drives :meth:`Machine.step` directly instead.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .capsules import (CAM_OP, CAS_OP, CHOOSE, HEADER, INSTALL, NIL, READ, REGISTRY, WRITE,
                       YIELD, CapsuleRegistry, Context, key_of, pack_restart, unpack_restart)
from .faults import HARD, SOFT, FaultEngine, FaultModel
from .memory import (CAM, CAS, EXT_READ, EXT_WRITE, LOCAL_READ, LOCAL_WRITE, Access,
                     AccessLog, CostCounters, EphemeralMemory, Event, MachineConfig,
                     ModelViolation, OutOfMemory, PersistentMemory, SchedulerBug, WORD_MASK)
from .metrics import CostReport

RESTART_CHARGE = 2
DEFAULT_STEP_BUDGET = 10 ** 8
_AUTO = object()


class MachineTimeout(RuntimeError):
    def __init__(self, msg, machine):
        super().__init__(msg)
        self.machine = machine


# -- interleaving strategies -------------------------------------------------

class InterleavingStrategy:
    kind = "abstract"

    def reset(self, P: int) -> None:
        pass

    def next_round(self, active: list[int]) -> list[int]:
        raise NotImplementedError


class RoundRobin(InterleavingStrategy):
    kind = "round-robin"

    def next_round(self, active):
        return active


class SeededRandom(InterleavingStrategy):
    """Random order each round; each processor is granted a step with ``activity``."""

    kind = "seeded-random"

    def __init__(self, seed: int = 0, activity: float = 1.0):
        self.seed = seed
        self.activity = activity

    def reset(self, P):
        self.rng = random.Random(self.seed)

    def next_round(self, active):
        rng = self.rng
        if self.activity < 1.0:
            chosen = [p for p in active if rng.random() < self.activity]
            if not chosen:
                chosen = [active[rng.randrange(len(active))]]
        else:
            chosen = list(active)
        rng.shuffle(chosen)
        return chosen


class Scripted(InterleavingStrategy):
    """One processor per round, taken from ``script``; round-robin once exhausted."""

    kind = "scripted"

    def __init__(self, script):
        self.script = list(script)

    def reset(self, P):
        self.pos = 0

    def next_round(self, active):
        while self.pos < len(self.script):
            p = self.script[self.pos]
            self.pos += 1
            if p in active:
                return [p]
        return active


def make_strategy(kind: str, seed: int = 0, script=None) -> InterleavingStrategy:
    if kind == "round-robin":
        return RoundRobin()
    if kind == "seeded-random":
        return SeededRandom(seed)
    if kind == "scripted":
        return Scripted(script or [])
    raise ValueError(f"unknown strategy {kind!r} (exhaustive runs go through ppmsim.explore)")


# -- processor state ---------------------------------------------------------

class Proc:
    __slots__ = ("id", "gen", "pending", "ctx", "capsule", "run", "exec_transfers",
                 "instance_wasted", "halted", "results", "eph", "depth", "depth_f", "rng")

    def __init__(self, pid: int, M: int, seed: int):
        self.id = pid
        self.gen = None
        self.pending = None
        self.ctx = None
        self.capsule = 0
        self.run = 0
        self.exec_transfers = 0
        self.instance_wasted = 0
        self.halted = True
        self.results: list = []
        self.eph = EphemeralMemory(M)
        self.depth = 0
        self.depth_f = 0
        self.rng = random.Random(seed * 1000003 + pid)


@dataclass
class Watch:
    lo: int
    hi: int
    fn: Callable  # fn(machine, proc, addr, old, new)


@dataclass
class RunResult:
    report: CostReport
    memory: list
    log: Optional[AccessLog]
    machine: "Machine" = field(repr=False, default=None)


class Machine:
    """Deterministic Parallel-PM machine.

    Usage: allocate and initialise data with :meth:`setup_alloc` /
    :meth:`poke`, boot processors with :meth:`boot`, then :meth:`run`.
    """

    def __init__(self, config: MachineConfig, faults: FaultModel | None = None,
                 strategy: InterleavingStrategy | None = None,
                 registry: CapsuleRegistry = REGISTRY, log: bool = False,
                 step_budget: int = DEFAULT_STEP_BUDGET, seed: int = 0,
                 track_results: bool = False):
        self.config = config
        self.B = config.B
        self.P = config.P
        self.registry = registry
        self.mem = PersistentMemory(config)
        self.words = self.mem.words
        self.faults = faults or FaultModel()
        self.engine = FaultEngine(self.faults, config.P)
        self.strategy = strategy or RoundRobin()
        self.log = AccessLog() if log else None
        self.step_budget = step_budget
        self.seed = seed
        self.track_results = track_results
        self.counters = CostCounters(config.P)
        self.procs = [Proc(p, config.M, seed) for p in range(config.P)]
        self.ts = 0
        self.steps = 0
        self.rounds = 0
        self.active_steps = 0
        self.next_capsule = 1
        self.max_executions = 0
        self.executions_hist: dict[int, int] = {}
        self.D = 0
        self.D_f = 0
        self.track_dag = False  # set by fork-join drivers
        self.on_install: list = []  # fn(machine, proc, ctx, closure)
        self.depth_of: dict[int, tuple[int, int]] = {}
        self.join_depth: dict[int, tuple[int, int]] = {}
        self.watches: list[Watch] = []
        self.choice_hook = None  # explorer supplies CHOOSE results
        self.done_addr: Optional[int] = None
        self.completed = 0
        self.user_completions: dict[int, int] = {}
        # layout: block 0 = NIL, then one restart record block per processor
        B = self.B
        self.restart_base = B
        self._cursor = B + config.P * B
        self.pools: list[tuple[int, int]] = []
        self._booted: dict[int, int] = {}
        self._started = False

    # -- setup -----------------------------------------------------------------

    def setup_alloc(self, n: int, align: bool = True) -> int:
        if self._started:
            raise ModelViolation("setup allocation after the run started")
        B = self.B
        size = -(-n // B) * B if align else n
        addr = self._cursor
        if addr + size > self.config.Mp:
            raise OutOfMemory("persistent memory exhausted during setup")
        self._cursor += max(size, 0)
        return addr

    def poke(self, addr: int, values) -> None:
        values = list(values)
        self.mem.check_range(addr, len(values))
        for v in values:
            if not 0 <= v <= WORD_MASK:
                raise ModelViolation(f"value {v} does not fit in a 64-bit word")
        self.words[addr:addr + len(values)] = values

    def peek(self, addr: int, n: int = 1) -> list[int]:
        self.mem.check_range(addr, n)
        return self.words[addr:addr + n]

    def setup_closure(self, name, args=(), cont: int = NIL) -> int:
        key = name if isinstance(name, int) else key_of(name)
        args = list(args)
        addr = self.setup_alloc(HEADER + len(args))
        self.poke(addr, [key, cont, len(args), *args])
        return addr

    def boot(self, proc: int, closure: int) -> None:
        self._booted[proc] = closure

    def restart_addr(self, proc: int) -> int:
        return self.restart_base + proc * self.B

    def watch(self, lo: int, hi: int, fn) -> None:
        self.watches.append(Watch(lo, hi, fn))

    def pool_end(self, addr: int) -> int:
        for lo, hi in self.pools:
            if lo <= addr < hi:
                return hi
        raise OutOfMemory(f"cursor {addr} is not inside any processor pool")

    def pool_owner(self, addr: int) -> int:
        for p, (lo, hi) in enumerate(self.pools):
            if lo <= addr < hi:
                return p
        return -1

    def _start(self) -> None:
        if self._started:
            return
        self._started = True
        B, P = self.B, self.P
        lo = self._cursor
        per = ((self.config.Mp - lo) // P) // B * B
        if per < B:
            raise OutOfMemory("no room left for processor pools")
        self.pools = [(lo + p * per, lo + (p + 1) * per) for p in range(P)]
        self.strategy.reset(P)
        for p in range(P):
            closure = self._booted.get(p, NIL)
            self.words[self.restart_addr(p)] = pack_restart(closure, self.pools[p][0])
        if self.log is not None:
            self.log.initial_memory = tuple(self.words)
        for p in range(P):
            pr = self.procs[p]
            if self._booted.get(p, NIL) != NIL:
                pr.capsule = self._new_capsule(p, self._booted[p])
                self._begin(pr)

    def solo_clone(self, words, proc: int) -> "Machine":
        """Fresh fault-free machine over ``words`` resuming only ``proc``.

        Used to replay one capsule in isolation; liveness is copied from
        this machine, pools and scheduler layout are shared.
        """
        m = Machine(self.config, registry=self.registry, seed=self.seed)
        m.words[:] = words
        m.pools = self.pools
        m._started = True
        m.engine.live = list(self.engine.live)
        m.engine.model = FaultModel(exempt=-1)
        if hasattr(self, "scheduler"):
            m.scheduler = self.scheduler
        pr = m.procs[proc]
        pr.capsule = m._new_capsule(proc, 0)
        m._begin(pr)
        return m

    # -- capsule lifecycle -----------------------------------------------------

    def _new_capsule(self, proc: int, closure: int) -> int:
        cid = self.next_capsule
        self.next_capsule += 1
        if self.log is not None:
            self.log.windows[cid] = [proc, self.ts, None]
            self.log.closure_of[cid] = closure
        return cid

    def _begin(self, pr: Proc) -> None:
        closure, cursor = unpack_restart(self.words[self.restart_addr(pr.id)])
        if closure == NIL:
            pr.halted = True
            pr.gen = None
            pr.pending = None
            return
        pr.halted = False
        pr.exec_transfers = 0
        ctx = Context(self, pr.id, closure, cursor)
        pr.ctx = ctx
        if self.track_results:
            pr.results = []
        gen = self._body(ctx)
        pr.gen = gen
        pr.pending = next(gen)

    def _body(self, ctx: Context):
        B = self.B
        addr = ctx.base
        words: list[int] = []
        need = HEADER
        while len(words) < need:
            blk = yield (READ, addr, B - addr % B)
            words.extend(blk)
            addr += len(blk)
            if len(words) >= HEADER:
                need = HEADER + words[2]
        key, cont, argc = words[0], words[1], words[2]
        spec = self.registry[key]
        ctx.key = key
        ctx.cont = cont
        ctx.args = words[HEADER:HEADER + argc]
        ctx.user = spec.user
        yield from spec.fn(ctx)
        if ctx.installed:
            return
        raise ModelViolation(f"capsule {spec.name!r} finished without installing a successor")

    def local_access(self, ctx: Context, i: int, v):
        pr = self.procs[ctx.proc]
        if v is None:
            val, valid = pr.eph.read(i)
            kind = LOCAL_READ
        else:
            pr.eph.write(i, v)
            val, valid, kind = v, True, LOCAL_WRITE
        if self.log is not None:
            self.ts += 1
            self.log.records.append(Access(self.ts, pr.id, pr.capsule, pr.run, kind, i, i,
                                           (val,), valid))
        return val

    # -- stepping --------------------------------------------------------------

    def active(self) -> list[int]:
        live = self.engine.live
        return [p.id for p in self.procs if not p.halted and live[p.id]]

    def is_done(self) -> bool:
        if self.done_addr is not None and self.words[self.done_addr]:
            return True
        return not self.active()

    def _advance(self, pr: Proc, value) -> None:
        if self.track_results:
            pr.results.append(tuple(value) if type(value) is list else value)
        pr.pending = pr.gen.send(value)

    def step(self, p: int, fault=_AUTO) -> None:
        """Execute the pending operation of processor ``p``.

        ``fault`` overrides the fault engine for this trial point (None, "soft"
        or "hard"); zero-cost operations are never trial points.
        """
        pr = self.procs[p]
        if not self.engine.live[p]:
            raise SchedulerBug(f"processor {p} is dead")
        if pr.halted:
            return
        self.steps += 1
        op = pr.pending
        code = op[0]
        if code == YIELD:
            self._advance(pr, None)
            return
        if code == CHOOSE:
            if self.choice_hook is not None:
                v = self.choice_hook(p, op[1])
            else:
                v = pr.rng.randrange(op[1])
            self._advance(pr, v)
            return
        if fault is _AUTO:
            kind = self.engine.maybe_fault(p)
        else:
            self.engine.ordinal[p] += 1
            kind = fault
            if kind == HARD:
                self.engine.kill(p)
        if kind is not None:
            self._fault(pr, kind)
            return
        words = self.words
        B = self.B
        log = self.log
        if code == READ:
            addr, n = op[1], op[2]
            if n == 0:
                if not 0 <= addr < len(words):
                    raise ModelViolation(f"persistent read at {addr} out of range")
                res = words[addr]
                val = (res,)
            else:
                if addr < 0 or addr + n > len(words) or (addr // B) != (addr + n - 1) // B:
                    raise ModelViolation(f"read [{addr}, {addr + n}) is not inside one block")
                res = words[addr:addr + n]
                val = tuple(res)
            self._charge(pr)
            if log is not None:
                self.ts += 1
                log.records.append(Access(self.ts, p, pr.capsule, pr.run, EXT_READ,
                                          addr // B, addr, val))
            self._advance(pr, res)
        elif code == WRITE:
            addr, vals = op[1], op[2]
            n = len(vals)
            if addr < 0 or addr + n > len(words) or (n and (addr // B) != (addr + n - 1) // B):
                raise ModelViolation(f"write [{addr}, {addr + n}) is not inside one block")
            for v in vals:
                if not 0 <= v <= WORD_MASK:
                    raise ModelViolation(f"value {v} does not fit in a 64-bit word")
            if self.watches:
                for i, v in enumerate(vals):
                    self._notify(p, addr + i, words[addr + i], v)
            words[addr:addr + n] = vals
            self._charge(pr)
            if log is not None:
                self.ts += 1
                log.records.append(Access(self.ts, p, pr.capsule, pr.run, EXT_WRITE,
                                          addr // B, addr, tuple(vals)))
            self._advance(pr, None)
        elif code == CAS_OP or code == CAM_OP:
            addr, exp, new = op[1], op[2], op[3]
            if not 0 <= addr < len(words):
                raise ModelViolation(f"CAS/CAM at {addr} out of range")
            if not 0 <= new <= WORD_MASK:
                raise ModelViolation(f"value {new} does not fit in a 64-bit word")
            old = words[addr]
            ok = old == exp
            if ok:
                if self.watches:
                    self._notify(p, addr, old, new)
                words[addr] = new
            if pr.ctx.joins:
                self._record_joins(pr)
            self._charge(pr)
            if log is not None:
                self.ts += 1
                log.records.append(Access(self.ts, p, pr.capsule, pr.run,
                                          CAS if code == CAS_OP else CAM, addr, addr,
                                          (exp, new), ok))
            self._advance(pr, ok if code == CAS_OP else None)
        elif code == INSTALL:
            self._install(pr, op[1], op[2])
        else:
            raise ModelViolation(f"unknown operation {op!r}")

    def _charge(self, pr: Proc) -> None:
        pr.exec_transfers += 1
        self.counters.total[pr.id] += 1

    def _notify(self, p, addr, old, new):
        for w in self.watches:
            if w.lo <= addr < w.hi:
                w.fn(self, p, addr, old, new)

    def _record_joins(self, pr: Proc) -> None:
        # a join capsule reports its thread's depth to the continuation
        d, df = pr.depth, pr.depth_f
        for k in pr.ctx.joins:
            o = self.join_depth.get(k, (0, 0))
            self.join_depth[k] = (max(o[0], d), max(o[1], df))

    def _install(self, pr: Proc, closure: int, cursor) -> None:
        p = pr.id
        ctx = pr.ctx
        if not 0 <= closure < len(self.words):
            raise ModelViolation(f"install of address {closure} outside persistent memory")
        if cursor is None:
            cursor = ctx.cursor
        ra = self.restart_addr(p)
        self.words[ra] = pack_restart(closure, cursor)
        self._charge(pr)
        t = pr.exec_transfers
        log = self.log
        if log is not None:
            self.ts += 1
            log.records.append(Access(self.ts, p, pr.capsule, pr.run, EXT_WRITE,
                                      ra // self.B, ra, (self.words[ra],)))
            log.events.append(Event(self.ts, p, pr.capsule, "install", closure))
            log.windows[pr.capsule][2] = self.ts
        # the body must stop right here
        ctx.installed = True
        try:
            pr.gen.send(None)
        except StopIteration:
            pass
        else:
            raise ModelViolation("operation issued after the install (one install per capsule)")
        counters = self.counters
        counters.capsules += 1
        if t > counters.C:
            counters.C = t
        execs = pr.run + 1
        if execs > self.max_executions:
            self.max_executions = execs
        self.executions_hist[execs] = self.executions_hist.get(execs, 0) + 1
        self.completed += 1
        # DAG depth bookkeeping (outside the model)
        if ctx.user:
            d = pr.depth + t
            df = pr.depth_f + pr.instance_wasted + t
            if d > self.D:
                self.D = d
            if df > self.D_f:
                self.D_f = df
            for c in ctx.created:
                self.depth_of[c] = (d, df)
            pr.depth, pr.depth_f = d, df
            self.user_completions[ctx.key] = self.user_completions.get(ctx.key, 0) + 1
        for hook in self.on_install:
            hook(self, p, ctx, closure)
        if closure in self.depth_of:
            pr.depth, pr.depth_f = self.depth_of[closure]
        if closure in self.join_depth:
            jd = self.join_depth[closure]
            pr.depth = max(pr.depth, jd[0])
            pr.depth_f = max(pr.depth_f, jd[1])
        pr.run = 0
        pr.instance_wasted = 0
        pr.capsule = self._new_capsule(p, closure)
        self._begin(pr)

    def _fault(self, pr: Proc, kind: str) -> None:
        p = pr.id
        c = self.counters
        c.wasted[p] += pr.exec_transfers
        pr.instance_wasted += pr.exec_transfers
        if pr.gen is not None:
            pr.gen.close()
        pr.gen = None
        pr.eph.scramble(self.engine.scramble_rng)
        log = self.log
        if log is not None:
            self.ts += 1
            log.events.append(Event(self.ts, p, pr.capsule, "fault" if kind == SOFT else "hard-fault"))
        if kind == HARD:
            pr.halted = True
            pr.pending = None
            return
        c.restart_charge[p] += RESTART_CHARGE
        c.total[p] += RESTART_CHARGE
        pr.instance_wasted += RESTART_CHARGE
        pr.run += 1
        if log is not None:
            self.ts += 1
            log.events.append(Event(self.ts, p, pr.capsule, "restart"))
        self._begin(pr)

    # -- driving ---------------------------------------------------------------

    def prepare(self) -> None:
        self._start()

    def run(self) -> RunResult:
        self._start()
        strategy = self.strategy
        budget = self.step_budget
        live = self.engine.live
        procs = self.procs
        done_addr = self.done_addr
        words = self.words
        while True:
            if done_addr is not None and words[done_addr]:
                break
            active = [pr.id for pr in procs if not pr.halted and live[pr.id]]
            if not active:
                break
            chosen = strategy.next_round(active)
            self.rounds += 1
            self.active_steps += len(chosen)
            for p in chosen:
                if not procs[p].halted and live[p]:
                    self.step(p)
            if self.steps > budget:
                raise MachineTimeout(f"step budget {budget} exhausted", self)
        return RunResult(self.report(), list(self.words), self.log, self)

    def report(self) -> CostReport:
        c = self.counters
        PA = self.active_steps / self.rounds if self.rounds else 0.0
        return CostReport(W=c.W, W_f=c.W_f,
                          D=self.D if self.track_dag else None,
                          D_f=self.D_f if self.track_dag else None,
                          T=c.T, T_f=c.T_f, C=c.C, P=self.P, P_A=PA)
