"""Fault-tolerant work-stealing scheduler.

Every processor owns a deque of tagged entries in persistent memory::

    entry word = tag << 44 | kind << 42 | payload
    kind       = empty 0 | local 1 | job 2 | taken 3
    job        payload = continuation closure address
    taken      payload = thief entry address << 20 | thief entry tag

``top``, ``bot`` and each entry sit in their own block so that single-word
CAM applies to them. Index 0 is a taken sentinel and ``top = bot = 1``
initially. Every step of push/pop/steal/help is its own capsule; each
capsule that CAMs does nothing after the CAM except install. Scheduler
capsules pass arguments to each other through fixed per-processor closure
slots, so the steal loop never allocates.

A watcher checks every entry mutation against the legal transitions
(empty->local, local->empty|job|taken, job->local|taken, empty->empty as a
pure tag bump, tags strictly increasing) and the deque ordering
taken* job* local{0,2} empty*.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .capsules import HEADER, NIL, REGISTRY, capsule, unpack_restart
from .memory import ModelViolation

EMPTY, LOCAL, JOB, TAKEN = range(4)
KIND_NAMES = ("empty", "local", "job", "taken")
TAG_SHIFT = 44
KIND_SHIFT = 42
PAYLOAD_MASK = (1 << KIND_SHIFT) - 1
TAG_LIMIT = 1 << 20
ADDR_LIMIT = 1 << 22
RANK = {TAKEN: 0, JOB: 1, LOCAL: 2, EMPTY: 3}

LEGAL = {(EMPTY, LOCAL), (LOCAL, EMPTY), (LOCAL, JOB), (LOCAL, TAKEN),
         (JOB, LOCAL), (JOB, TAKEN), (EMPTY, EMPTY)}


class DequeOverflow(ModelViolation):
    pass


def ent(tag: int, kind: int, payload: int = 0) -> int:
    if tag >= TAG_LIMIT:
        raise DequeOverflow("entry tag overflow")
    return (tag << TAG_SHIFT) | (kind << KIND_SHIFT) | payload


def tag(e: int) -> int:
    return e >> TAG_SHIFT


def kind(e: int) -> int:
    return (e >> KIND_SHIFT) & 3


def payload(e: int) -> int:
    return e & PAYLOAD_MASK


def pack_taken(entry_addr: int, entry_tag: int) -> int:
    return (entry_addr << 20) | entry_tag


def unpack_taken(p: int) -> tuple[int, int]:
    return p >> 20, p & (TAG_LIMIT - 1)


def describe(e: int) -> str:
    k = kind(e)
    if k == JOB:
        return f"<{tag(e)},job({payload(e)})>"
    if k == TAKEN:
        a, c = unpack_taken(payload(e))
        return f"<{tag(e)},taken({a},{c})>"
    return f"<{tag(e)},{KIND_NAMES[k]}>"


SLOTS = ("pb1", "pb2", "fw1", "fwcam", "fw3", "st1", "h1", "hc1", "hc2", "pt2", "ptj",
         "ptj2", "ptl1", "ptl2b", "ptl3", "ptl4", "sch", "join2")
SLOT_ARGS = 6


@dataclass
class DequeStats:
    jobs_created: int = 0
    pop_bottom: int = 0
    steals: int = 0
    local_steals: int = 0
    helps: int = 0


@dataclass
class Violation:
    proc: int
    deque: int
    what: str


class WorkStealingScheduler:
    """Lays out the deques and scheduler slots of ``machine`` and boots it."""

    def __init__(self, machine, root_closure: int, root_proc: int = 0):
        from . import forkjoin  # noqa: F401  (registers the join capsules)
        self.m = machine
        cfg = machine.config
        if cfg.Mp > ADDR_LIMIT:
            raise ValueError(f"the scheduler packs addresses in 22 bits; Mp <= {ADDR_LIMIT}")
        B = self.B = cfg.B
        self.P = P = cfg.P
        self.S = S = cfg.S
        self.dq_size = (S + 2) * B
        self.dq_base = machine.setup_alloc(P * self.dq_size)
        self.dq_end = self.dq_base + P * self.dq_size
        self.slot_size = -(-(HEADER + SLOT_ARGS) // B) * B
        self.slot_base = machine.setup_alloc(P * len(SLOTS) * self.slot_size)
        self._slot_index = {n: i for i, n in enumerate(SLOTS)}
        self.keys = {}
        for name in SLOTS:
            cname = _CAPSULE_OF.get(name, "ws." + name)
            self.keys[name] = REGISTRY.key(cname)
        self.pb1_slots = {self.slot(p, "pb1") for p in range(P)}
        self.stats = [DequeStats() for _ in range(P)]
        self.violations: list[Violation] = []
        self.forks = 0
        self.kinds = [[EMPTY] * S for _ in range(P)]
        self.tags = [[0] * S for _ in range(P)]
        self.locals = [0] * P
        self.one_shot = False  # micro-scenarios: a failed steal halts instead of retrying
        machine.scheduler = self
        for q in range(P):
            self._init_deque(q, local=(q == root_proc))
            self._fill_setup(q, "sch", ())
            self._fill_setup(q, "fw1", (q,))
        for q in range(P):
            machine.boot(q, root_closure if q == root_proc else self.slot(q, "fw1"))
        machine.watch(self.dq_base, self.dq_end, self._on_write)
        machine.on_install.append(self._on_install)

    # layout
    def top(self, q: int) -> int:
        return self.dq_base + q * self.dq_size

    def bot(self, q: int) -> int:
        return self.dq_base + q * self.dq_size + self.B

    def stk(self, q: int, i: int) -> int:
        if not 0 <= i < self.S:
            raise DequeOverflow(f"deque {q} index {i} outside capacity S={self.S}")
        return self.dq_base + q * self.dq_size + (2 + i) * self.B

    def slot(self, p: int, name: str) -> int:
        return self.slot_base + (p * len(SLOTS) + self._slot_index[name]) * self.slot_size

    def fill(self, ctx, name: str, args, cont: int = NIL):
        addr = self.slot(ctx.proc, name)
        yield from ctx.fill_closure(addr, self.keys[name], args, cont)
        return addr

    def _fill_setup(self, q, name, args, cont=NIL):
        self.m.poke(self.slot(q, name), [self.keys[name], cont, len(args), *args])

    def _init_deque(self, q: int, local: bool) -> None:
        m = self.m
        m.poke(self.top(q), [1])
        m.poke(self.bot(q), [1])
        m.poke(self.stk(q, 0), [ent(0, TAKEN)])
        self.kinds[q][0] = TAKEN
        if local:
            m.poke(self.stk(q, 1), [ent(1, LOCAL)])
            self.kinds[q][1] = LOCAL
            self.tags[q][1] = 1
            self.locals[q] = 1

    def set_entry(self, q: int, i: int, e: int) -> None:
        """Setup-time entry write that keeps the checker's mirror in sync."""
        self.m.poke(self.stk(q, i), [e])
        if self.kinds[q][i] == LOCAL:
            self.locals[q] -= 1
        self.kinds[q][i] = kind(e)
        self.tags[q][i] = tag(e)
        if kind(e) == LOCAL:
            self.locals[q] += 1

    def set_pointers(self, q: int, top: int, bot: int) -> None:
        self.m.poke(self.top(q), [top])
        self.m.poke(self.bot(q), [bot])

    def setup_slot(self, q: int, name: str, args, cont: int = NIL) -> int:
        self._fill_setup(q, name, args, cont)
        return self.slot(q, name)

    def read_entry(self, q: int, i: int) -> int:
        return self.m.words[self.stk(q, i)]

    def snapshot(self, q: int):
        w = self.m.words
        return (w[self.top(q)], w[self.bot(q)], [w[self.stk(q, i)] for i in range(self.S)])

    # online checkers
    def _violate(self, p, q, what):
        self.violations.append(Violation(p, q, what))

    def _on_write(self, m, p, addr, old, new):
        if old == new:
            return
        off = addr - self.dq_base
        q, r = divmod(off, self.dq_size)
        slot, sub = divmod(r, self.B)
        if sub:
            return
        if slot == 0:
            if new < old:
                self._violate(p, q, f"top decreased {old}->{new}")
            elif self.kinds[q][old] != TAKEN:
                self._violate(p, q, f"top advanced past non-taken index {old}")
            return
        if slot == 1:
            if new < 1:
                self._violate(p, q, f"bot below initial index: {new}")
            return
        i = slot - 2
        ko, kn = kind(old), kind(new)
        if (ko, kn) not in LEGAL:
            self._violate(p, q, f"illegal transition at {i}: {describe(old)} -> {describe(new)}")
        if tag(new) <= tag(old):
            self._violate(p, q, f"tag not increasing at {i}: {describe(old)} -> {describe(new)}")
        kinds = self.kinds[q]
        kinds[i] = kn
        self.tags[q][i] = tag(new)
        if ko == LOCAL:
            self.locals[q] -= 1
        if kn == LOCAL:
            self.locals[q] += 1
            if self.locals[q] > 2:
                self._violate(p, q, "more than two local entries")
        rk = RANK[kn]
        if (i > 0 and RANK[kinds[i - 1]] > rk) or (i + 1 < self.S and RANK[kinds[i + 1]] < rk):
            self._violate(p, q, f"deque order broken at {i}: "
                                f"{[KIND_NAMES[k] for k in kinds[max(0, i - 2):i + 3]]}")
        st = self.stats[q]
        if kn == TAKEN:
            top = m.words[self.top(q)]
            if top != i:
                self._violate(p, q, f"entry {i} taken while top={top}")
        if ko == LOCAL and kn == JOB:
            st.jobs_created += 1
            ev = "fork"
        elif ko == JOB and kn == LOCAL:
            st.pop_bottom += 1
            ev = "pop-bottom"
        elif ko == JOB and kn == TAKEN:
            st.steals += 1
            ev = "steal"
        elif ko == LOCAL and kn == TAKEN:
            st.local_steals += 1
            ev = "local-steal"
        elif ko == EMPTY and kn == LOCAL:
            st.helps += 1
            ev = "help"
        else:
            ev = "clear"
        if m.log is not None:
            m.log.sched_events.append({"proc": p, "event": ev, "victim": q, "index": i,
                                       "tag": tag(new), "ts": m.ts + 1})

    def _on_install(self, m, p, ctx, closure):
        if ctx.user and closure in self.pb1_slots:
            self.forks += 1
        if not m.engine.live[p]:
            return
        b = m.words[self.bot(p)]
        if not 1 <= b < self.S:
            self._violate(p, p, f"bot {b} out of range")
            return
        kinds = self.kinds[p]
        if kinds[b] == LOCAL or (kinds[b] == EMPTY and kinds[b - 1] != EMPTY):
            return
        self._violate(p, p, f"bot={b} points at {KIND_NAMES[kinds[b]]} "
                            f"(below: {KIND_NAMES[kinds[b - 1]]})")

    # summaries
    @property
    def jobs_created(self) -> int:
        return sum(s.jobs_created for s in self.stats)

    @property
    def successful_pops(self) -> int:
        return sum(s.pop_bottom + s.steals for s in self.stats)

    def exactly_once_ok(self) -> bool:
        return (self.forks == self.jobs_created == self.successful_pops
                and all(s.local_steals <= 1 for s in self.stats))


_CAPSULE_OF = {"fwcam": "ws.cam", "hc1": "ws.cam", "hc2": "ws.cam", "ptj": "ws.cam",
               "ptl2b": "ws.cam", "ptl3": "ws.cam", "join2": "fj.join2"}


# -- scheduler capsules ------------------------------------------------------

@capsule("ws.cam", user=False)
def cam_step(ctx):
    addr, expected, new = ctx.args
    yield ctx.cam(addr, expected, new)
    yield ctx.ret()


def _steal_again(s, ctx, q):
    if s.one_shot:
        yield ctx.halt()
        return
    a = yield from s.fill(ctx, "st1", (q,))
    yield ctx.install(a)


@capsule("ws.pb1", user=False)
def push_bottom_read(ctx):
    s = ctx.machine.scheduler
    q, f, k = ctx.args
    b = yield ctx.read(s.bot(q))
    t1 = tag((yield ctx.read(s.stk(q, b + 1))))
    t2 = tag((yield ctx.read(s.stk(q, b))))
    a = yield from s.fill(ctx, "pb2", (q, b, t1, t2, f, k))
    yield ctx.install(a)


@capsule("ws.pb2", user=False)
def push_bottom(ctx):
    s = ctx.machine.scheduler
    q, b, t1, t2, f, k = ctx.args
    e = yield ctx.read(s.stk(q, b))
    if e == ent(t2, LOCAL):
        yield ctx.write(s.stk(q, b + 1), ent(t1 + 1, LOCAL))
        yield ctx.write(s.bot(q), b + 1)
        yield ctx.cam(s.stk(q, b), ent(t2, LOCAL), ent(t2 + 1, JOB, f))
        yield ctx.install(k)
        return
    # our local entry was stolen after a hard fault: push onto the runner's deque
    e1 = yield ctx.read(s.stk(q, b + 1))
    if kind(e1) == EMPTY:
        a = yield from s.fill(ctx, "pb1", (ctx.proc, f, k))
        yield ctx.install(a)
    else:
        yield ctx.install(k)


@capsule("ws.fw1", user=False)
def pop_bottom_read(ctx):
    s = ctx.machine.scheduler
    (q,) = ctx.args
    b = yield ctx.read(s.bot(q))
    old = yield ctx.read(s.stk(q, b - 1))
    if kind(old) == JOB:
        f3 = yield from s.fill(ctx, "fw3", (q, b, old))
        a = yield from s.fill(ctx, "fwcam", (s.stk(q, b - 1), old, ent(tag(old) + 1, LOCAL)),
                              cont=f3)
        yield ctx.install(a)
    else:
        yield from _steal_again(s, ctx, q)


@capsule("ws.fw3", user=False)
def pop_bottom_check(ctx):
    s = ctx.machine.scheduler
    q, b, old = ctx.args
    e = yield ctx.read(s.stk(q, b - 1))
    j = tag(old)
    # taken with tag j+2 means our CAM won and a thief then took the local entry
    if e == ent(j + 1, LOCAL) or (kind(e) == TAKEN and tag(e) == j + 2):
        yield ctx.write(s.bot(q), b - 1)
        yield ctx.install(payload(old))
    else:
        yield from _steal_again(s, ctx, q)


@capsule("ws.st1", user=False)
def steal_attempt(ctx):
    s = ctx.machine.scheduler
    (q,) = ctx.args
    yield ctx.yield_()
    v = yield ctx.choose(ctx.P)
    b = yield ctx.read(s.bot(q))
    c = tag((yield ctx.read(s.stk(q, b))))
    p2 = yield from s.fill(ctx, "pt2", (v, s.stk(q, b), c, q))
    h = yield from s.fill(ctx, "h1", (v,), cont=p2)
    yield ctx.install(h)


@capsule("ws.h1", user=False)
def help_pop_top(ctx):
    s = ctx.machine.scheduler
    (v,) = ctx.args
    t = yield ctx.read(s.top(v))
    e = yield ctx.read(s.stk(v, t))
    if kind(e) == TAKEN:
        ps, i = unpack_taken(payload(e))
        c2 = yield from s.fill(ctx, "hc2", (s.top(v), t, t + 1), cont=ctx.cont)
        c1 = yield from s.fill(ctx, "hc1", (ps, ent(i, EMPTY), ent(i + 1, LOCAL)), cont=c2)
        yield ctx.install(c1)
    else:
        yield ctx.ret()


@capsule("ws.pt2", user=False)
def pop_top(ctx):
    s = ctx.machine.scheduler
    v, e, c, q = ctx.args
    i = yield ctx.read(s.top(v))
    old = yield ctx.read(s.stk(v, i))
    k = kind(old)
    if k == EMPTY:
        yield from _steal_again(s, ctx, q)
    elif k == TAKEN:
        st = NIL
        if not s.one_shot:
            st = yield from s.fill(ctx, "st1", (q,))
        h = yield from s.fill(ctx, "h1", (v,), cont=st)
        yield ctx.install(h)
    elif k == JOB:
        new = ent(tag(old) + 1, TAKEN, pack_taken(e, c))
        j2 = yield from s.fill(ctx, "ptj2", (v, i, new, payload(old), q))
        h = yield from s.fill(ctx, "h1", (v,), cont=j2)
        a = yield from s.fill(ctx, "ptj", (s.stk(v, i), old, new), cont=h)
        yield ctx.install(a)
    else:
        a = yield from s.fill(ctx, "ptl1", (v, i, old, e, c, q))
        yield ctx.install(a)


@capsule("ws.ptj2", user=False)
def pop_top_job_check(ctx):
    s = ctx.machine.scheduler
    v, i, new, f, q = ctx.args
    cur = yield ctx.read(s.stk(v, i))
    if cur != new:
        yield from _steal_again(s, ctx, q)
    else:
        yield ctx.install(f)


@capsule("ws.ptl1", user=False)
def pop_top_local(ctx):
    s = ctx.machine.scheduler
    v, i, old, e, c, q = ctx.args
    if ctx.is_live(v):
        yield from _steal_again(s, ctx, q)
        return
    cur = yield ctx.read(s.stk(v, i))
    if cur != old:
        yield from _steal_again(s, ctx, q)
        return
    nxt = yield ctx.read(s.stk(v, i + 1))
    new = ent(tag(old) + 1, TAKEN, pack_taken(e, c))
    p4 = yield from s.fill(ctx, "ptl4", (v, i, new, q))
    h = yield from s.fill(ctx, "h1", (v,), cont=p4)
    p3 = yield from s.fill(ctx, "ptl3", (s.stk(v, i), old, new), cont=h)
    p2 = yield from s.fill(ctx, "ptl2b", (s.stk(v, i + 1), nxt, ent(tag(nxt) + 1, EMPTY)),
                           cont=p3)
    yield ctx.install(p2)


@capsule("ws.ptl4", user=False)
def pop_top_local_check(ctx):
    s = ctx.machine.scheduler
    v, i, new, q = ctx.args
    cur = yield ctx.read(s.stk(v, i))
    if cur != new:
        yield from _steal_again(s, ctx, q)
        return
    closure, cursor = yield from active_capsule(ctx, v)
    yield ctx.install(closure, cursor)


def active_capsule(ctx, owner: int):
    """Closure and allocation cursor the dead ``owner`` was running."""
    if ctx.is_live(owner):
        raise ModelViolation(f"active capsule of live processor {owner} requested")
    w = yield ctx.read(ctx.machine.restart_addr(owner))
    return unpack_restart(w)


@capsule("ws.sch", user=False)
def scheduler_entry(ctx):
    s = ctx.machine.scheduler
    q = ctx.proc
    b = yield ctx.read(s.bot(q))
    t = tag((yield ctx.read(s.stk(q, b))))
    yield ctx.write(s.stk(q, b), ent(t + 1, EMPTY))
    a = yield from s.fill(ctx, "fw1", (q,))
    yield ctx.install(a)


# -- user-level entry points -------------------------------------------------

def fork(ctx, f: int, k: int):
    """Push continuation ``f`` as a job and continue the thread at ``k``."""
    s = ctx.machine.scheduler
    a = yield from s.fill(ctx, "pb1", (ctx.proc, f, k))
    yield ctx.install(a)


def end_thread(ctx):
    """Finish the running thread and return to the scheduler."""
    yield ctx.install(ctx.machine.scheduler.slot(ctx.proc, "sch"))
