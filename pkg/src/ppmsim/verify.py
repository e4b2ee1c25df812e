"""Named verification suites shared by the CLI and the acceptance tests.

Each suite returns a list of :class:`Check` results. Suites stay small
enough to run in well under a minute each unless stated otherwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from . import corpus
from .capsules import NIL, capsule
from .explore import Explorer, atomic_idempotence_check, persistent_records
from .faults import SOFT, FaultModel
from .machine import Machine, SeededRandom
from .memory import EXT_READ, EXT_WRITE, MachineConfig, war_conflict_scan
from .scheduler import JOB, LOCAL, TAKEN, WorkStealingScheduler, ent, pack_taken


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


# -- idempotence ---------------------------------------------------------------

def idempotence_program(program: corpus.Program, random_schedules: int = 100,
                        f: float = 0.2) -> Check:
    base = corpus.build(program, log=True)
    ref = base.run()
    trials = base.engine.trials
    bad = []
    for cid in ref.log.windows:
        rep = war_conflict_scan(ref.log, cid)
        if not rep.ok:
            bad.append(f"WAR conflict in capsule {cid}: {rep.conflicts[:1]}")
    for o in range(trials):
        m = corpus.build(program, faults=FaultModel(script=[(0, o, SOFT)]))
        if m.run().memory != ref.memory:
            bad.append(f"fault at trial {o} changes memory")
    for seed in range(random_schedules):
        m = corpus.build(program, faults=FaultModel(f=f, seed=seed), seed=seed)
        if m.run().memory != ref.memory:
            bad.append(f"random schedule seed={seed} changes memory")
    detail = f"{trials} fault positions + {random_schedules} schedules"
    return Check(f"idempotence/{program.name}", not bad, "; ".join(bad[:3]) or detail)


def suite_idempotence(random_schedules: int = 100) -> list[Check]:
    checks = [idempotence_program(p, random_schedules) for p in corpus.PROGRAMS]
    checks.append(Check("idempotence/corpus-size", len(corpus.PROGRAMS) >= 20,
                        f"{len(corpus.PROGRAMS)} programs"))
    return checks


# -- atomic idempotence micro-scenarios -------------------------------------------

@capsule("v.set")
def _set(ctx):
    x, v = ctx.args
    yield ctx.write(x, v)
    yield ctx.ret()


@capsule("v.set_twice")
def _set_twice(ctx):
    x, a, b = ctx.args
    yield ctx.write(x, a)
    yield ctx.write(x, b)
    yield ctx.ret()


@capsule("v.flag")
def _flag(ctx):
    """Private write, then one racy write of a shared flag."""
    x, z = ctx.args
    yield ctx.write(z, 7)
    yield ctx.write(x, 1)
    yield ctx.ret()


@capsule("v.tas")
def _tas(ctx):
    x, me, mark = ctx.args
    yield ctx.write(mark, me)
    yield ctx.cam(x, 0, me)
    yield ctx.ret()


@capsule("v.won")
def _won(ctx):
    x, me, out = ctx.args
    v = yield ctx.read(x)
    yield ctx.write(out, int(v == me))
    yield ctx.ret()


@capsule("v.copy2")
def _copy2(ctx):
    x, y, cx, cy = ctx.args
    a = yield ctx.read(x)
    b = yield ctx.read(y)
    yield ctx.write(cx, a)
    yield ctx.write(cy, b)
    yield ctx.ret()


@capsule("v.incr")
def _incr(ctx):
    """Deliberate WAR conflict: read x, write x + 1 in one capsule."""
    (x,) = ctx.args
    v = yield ctx.read(x)
    yield ctx.write(x, v + 1)
    yield ctx.ret()


MICRO_B = 4


@dataclass
class Scenario:
    name: str
    P: int
    data: int  # words of shared data, one block each
    programs: Callable  # programs(d) -> per-processor list of (name, args) steps; d[i] = address of word i
    targets: list  # (proc, step index) pairs whose capsules must be atomically idempotent
    max_faults: int = 1
    expect_ok: bool = True
    extra: Callable = None  # extra(machine, layout, log) -> error string or ""
    shared: tuple = None  # indices of contended words; private words need no interleaving


def _build_scenario(sc: Scenario):
    cfg = MachineConfig(P=sc.P, M=16, Mp=1024, B=MICRO_B, S=4)
    m = Machine(cfg, log=True)
    d = [m.setup_alloc(1) for _ in range(sc.data)]
    closures = {}
    for p, steps in enumerate(sc.programs(d)):
        nxt = m.setup_closure("c.halt")
        for i in reversed(range(len(steps))):
            name, args = steps[i]
            nxt = m.setup_closure(name, args, cont=nxt)
            closures[(p, i)] = nxt
        m.boot(p, nxt)
    return m, {"d": d, "closures": closures}


def _single_transition(log, addr) -> int:
    """Number of times the value stored at ``addr`` changes over the history."""
    w = list(log.initial_memory)
    changes = 0
    for r in persistent_records(log):
        if r.kind == EXT_WRITE and r.addr <= addr < r.addr + len(r.value):
            new = r.value[addr - r.addr]
            changes += new != w[addr]
            w[r.addr:r.addr + len(r.value)] = r.value
        elif r.kind not in (EXT_READ, EXT_WRITE) and r.addr == addr and r.ok:
            new = r.value[1]
            changes += new != w[addr]
            w[addr] = new
    return changes


def _multiread_extra(m, lay, log):
    x, y, cx, cy = lay["d"][:4]
    cid = log.capsules_of(lay["closures"][(0, 0)])[0]
    recs = [r for r in log.records if r.capsule == cid]
    last = max(r.run for r in recs)
    seen = {r.addr: r.value[0] for r in recs if r.run == last and r.kind == EXT_READ}
    if (m.words[cx], m.words[cy]) != (seen.get(x), seen.get(y)):
        return f"copies {m.words[cx], m.words[cy]} differ from last-run reads {seen.get(x), seen.get(y)}"
    return ""


def _flag_extra(m, lay, log):
    n = _single_transition(log, lay["d"][0])
    return "" if n == 1 else f"flag changed {n} times"


def _tas_extra(m, lay, log):
    outs = lay["d"][1:]
    winners = sum(m.words[a] for a in outs[len(outs) // 2:])
    return "" if winners == 1 else f"{winners} test-and-set winners"


SCENARIOS = [
    Scenario("race-free", 2, 3,
             lambda d: [[("c.copy", (d[0], d[1]))], [("c.copy", (d[0], d[2]))]],
             [(0, 0), (1, 0)]),
    Scenario("racy-read", 2, 2,
             lambda d: [[("c.copy", (d[0], d[1]))], [("v.set_twice", (d[0], 5, 9))]],
             [(0, 0)]),
    Scenario("racy-write-vs-reads", 2, 4,
             lambda d: [[("v.flag", (d[0], d[1]))],
                        [("c.copy", (d[0], d[2])), ("c.copy", (d[0], d[3]))]],
             [(0, 0), (1, 0), (1, 1)], extra=_flag_extra),
    Scenario("racy-write-vs-writes", 2, 1,
             lambda d: [[("v.set", (d[0], 1))], [("v.set", (d[0], 2))]],
             [(0, 0), (1, 0)]),
    Scenario("racy-multiread", 2, 4,
             lambda d: [[("v.copy2", (d[0], d[1], d[2], d[3]))],
                        [("v.set", (d[0], 1)), ("v.set", (d[1], 1))]],
             [], extra=_multiread_extra),  # not atomic in general: only the copies are checked
    Scenario("cam-test-and-set", 2, 5,
             lambda d: [[("v.tas", (d[0], 1, d[1])), ("v.won", (d[0], 1, d[3]))],
                        [("v.tas", (d[0], 2, d[2])), ("v.won", (d[0], 2, d[4]))]],
             [(0, 0), (1, 0)], max_faults=2, extra=_tas_extra, shared=(0,)),
    Scenario("cam-test-and-set-3p", 3, 7,
             lambda d: [[("v.tas", (d[0], p + 1, d[1 + p])), ("v.won", (d[0], p + 1, d[4 + p]))]
                        for p in range(3)],
             [(0, 0), (1, 0), (2, 0)], extra=_tas_extra, shared=(0,)),
    Scenario("conflicting-increment", 2, 2,
             lambda d: [[("v.incr", (d[0],))], [("c.copy", (d[0], d[1]))]],
             [(0, 0)], expect_ok=False),
]


def run_scenario(sc: Scenario) -> Check:
    t0 = time.perf_counter()
    _, lay = _build_scenario(sc)
    idx = range(sc.data) if sc.shared is None else sc.shared
    shared = {lay["d"][i] for i in idx}
    tally = {"histories": 0, "no": 0, "yes": 0, "extra": []}
    first_no = []

    def on_final(m, path):
        tally["histories"] += 1
        log = m.log
        for key in sc.targets:
            for cid in log.capsules_of(lay["closures"][key]):
                if log.windows[cid][2] is None:
                    continue
                v = atomic_idempotence_check(log, cid, m)
                if v.ok:
                    tally["yes"] += 1
                else:
                    tally["no"] += 1
                    if not first_no:
                        first_no.append(f"capsule {cid}: {v.reason}")
        if sc.extra:
            why = sc.extra(m, lay, log)
            if why:
                tally["extra"].append(why)

    ex = Explorer(lambda: _build_scenario(sc)[0], max_faults=sc.max_faults, prune=False,
                  visible=shared.__contains__)
    stats = ex.run(on_final)
    dt = time.perf_counter() - t0
    summary = (f"{tally['histories']} histories, {tally['yes']} yes / {tally['no']} no, "
               f"{stats.max_visible} shared accesses max, {dt:.1f}s")
    if sc.expect_ok:
        ok = tally["no"] == 0 and not tally["extra"] and (tally["yes"] > 0 or not sc.targets)
        if tally["extra"]:
            summary += f"; {tally['extra'][0]}"
        elif first_no:
            summary += f"; {first_no[0]}"
    else:
        ok = tally["no"] > 0
        if first_no:
            summary += f"; counterexample {first_no[0]}"
    return Check(f"atomicity/{sc.name}", ok, summary)


def suite_atomicity() -> list[Check]:
    return [run_scenario(sc) for sc in SCENARIOS]


# -- deque micro-scenarios --------------------------------------------------------

@capsule("d.claim")
def _claim(ctx):
    (claims,) = ctx.args
    yield ctx.write(claims + ctx.proc, 1)
    yield ctx.halt()


def _deque_machine(P: int, roles: dict, setup: Callable, dead=()):
    """Scheduler layout with no root thread; ``roles[p]`` is 'thief' or 'owner'."""
    m = Machine(MachineConfig(P=P, M=16, Mp=2048, B=1, S=4))
    claims = m.setup_alloc(P)
    F = m.setup_closure("d.claim", [claims])
    s = WorkStealingScheduler(m, NIL, root_proc=-1)
    s.one_shot = True
    m.micro = {"claims": claims, "F": F, "s": s}
    for p in range(P):
        m.boot(p, NIL)
    setup(m, s, F)
    for p, role in roles.items():
        if role == "thief":
            v = m.micro["victim"]
            pt = s.setup_slot(p, "pt2", (v, s.stk(p, 1), 0, p))
            m.boot(p, s.setup_slot(p, "h1", (v,), cont=pt))
        elif role == "helper":
            m.boot(p, s.setup_slot(p, "h1", (m.micro["victim"],)))
        elif role == "owner":
            m.boot(p, s.slot(p, "fw1"))
    for p in dead:
        m.engine.kill(p)
    return m


def _job_on(victim):
    def setup(m, s, F):
        m.micro["victim"] = victim
        s.set_entry(victim, 1, ent(1, JOB, F))
        s.set_pointers(victim, 1, 2)
    return setup


def _taken_on(victim, thief):
    def setup(m, s, F):
        m.micro["victim"] = victim
        s.set_entry(victim, 1, ent(1, TAKEN, pack_taken(s.stk(thief, 1), 0)))
        s.set_pointers(victim, 1, 2)
    return setup


def _local_on(victim):
    def setup(m, s, F):
        m.micro["victim"] = victim
        s.set_entry(victim, 1, ent(1, LOCAL))
        s.set_pointers(victim, 1, 1)
        m.boot(victim, F)
    return setup


@dataclass
class DequeScenario:
    name: str
    P: int
    roles: dict
    setup: Callable
    dead: tuple = ()
    claims_allowed: tuple = (1,)
    max_faults: int = 1
    hard: bool = False


DEQUE_SCENARIOS = [
    DequeScenario("two-thieves-one-job", 3, {0: "thief", 1: "thief"}, _job_on(2)),
    DequeScenario("two-thieves-one-job-hard", 3, {0: "thief", 1: "thief"}, _job_on(2),
                  claims_allowed=(0, 1), hard=True),
    DequeScenario("pop-bottom-vs-thief", 2, {0: "thief", 1: "owner"}, _job_on(1)),
    DequeScenario("two-thieves-dead-local", 3, {0: "thief", 1: "thief"}, _local_on(2), dead=(2,)),
]


def _deque_visible(m):
    s, claims = m.micro["s"], m.micro["claims"]
    return lambda a: s.dq_base <= a < s.dq_end or claims <= a < claims + m.P


def run_deque_scenario(sc: DequeScenario) -> Check:
    t0 = time.perf_counter()
    build = lambda: _deque_machine(sc.P, sc.roles, sc.setup, sc.dead)  # noqa: E731
    probe = build()
    problems = []
    finals = [0]

    def on_final(m, path):
        finals[0] += 1
        s = m.micro["s"]
        claims = m.micro["claims"]
        n = sum(m.words[claims:claims + m.P])
        if n not in sc.claims_allowed:
            problems.append(f"{n} claims after {len(path)} steps")
        if s.violations:
            problems.append(str(s.violations[0]))
        if any(st.local_steals > 1 for st in s.stats):
            problems.append("two local steals of one deque")

    ex = Explorer(build, max_faults=sc.max_faults, hard=sc.hard, visible=_deque_visible(probe),
                  prune=True, max_visible=64)
    stats = ex.run(on_final)
    dt = time.perf_counter() - t0
    detail = f"{finals[0]} final states, {stats.nodes} nodes, {dt:.1f}s"
    return Check(f"deque/{sc.name}", not problems and finals[0] > 0,
                 f"{problems[0]} ({detail})" if problems else detail)


def helper_equivalence() -> Check:
    """Two concurrent helpers leave the deques exactly as one helper does."""
    def finals(roles):
        out = set()

        def on_final(m, path):
            s = m.micro["s"]
            out.add((repr(s.snapshot(0)), repr(s.snapshot(2)), len(s.violations)))
        build = lambda: _deque_machine(3, roles, _taken_on(2, 0))  # noqa: E731
        Explorer(build, max_faults=1, visible=_deque_visible(build()), prune=True,
                 max_visible=64).run(on_final)
        return out
    one = finals({1: "helper"})
    two = finals({0: "helper", 1: "helper"})
    ok = one == two and len(one) == 1
    return Check("deque/helpers-idempotent", ok, f"{len(one)} vs {len(two)} distinct final states")


def deque_random_runs(runs: int = 40) -> Check:
    """Small fork-join trees under random faults keep the exactly-once counts."""
    from .forkjoin import run_tree
    bad = []
    for seed in range(runs):
        P = (2, 4, 8)[seed % 3]
        cfg = MachineConfig(P=P, Mp=1 << 16, B=4, S=16)
        r = run_tree(cfg, 31, seed=seed, faults=FaultModel(f=0.02, seed=seed),
                     strategy=SeededRandom(seed))
        s = r.scheduler
        if s.violations or not s.exactly_once_ok():
            bad.append(f"seed {seed}")
    return Check("deque/random-trees", not bad, ", ".join(bad[:5]) or f"{runs} runs")


def suite_deque() -> list[Check]:
    checks = [run_deque_scenario(sc) for sc in DEQUE_SCENARIOS]
    checks.append(helper_equivalence())
    checks.append(deque_random_runs())
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "idempotence": suite_idempotence,
    "atomicity": suite_atomicity,
    "deque": suite_deque,
}


def _lazy(name):
    def run():
        from . import verify_more
        return getattr(verify_more, "suite_" + name)()
    return run


for _name in ("simulations", "algorithms", "bounds"):
    SUITES[_name] = _lazy(_name)


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name]()
