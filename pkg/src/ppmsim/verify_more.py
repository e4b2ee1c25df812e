"""Verification suites for the simulations, the algorithms and the cost bounds."""

from __future__ import annotations

import random
from fractions import Fraction

from .faults import FaultModel
from .forkjoin import run_tree
from .memory import MachineConfig, war_conflict_scan
from .metrics import inflation_check, restart_bound
from .verify import Check


# -- simulations -----------------------------------------------------------------

def _war_clean(machine) -> int:
    log = machine.log
    return sum(1 for cid in log.windows if not war_conflict_scan(log, cid).ok)


def _sim_cases():
    from .simulations import (run_native_em, run_native_ic, run_native_ram, simulate_em,
                              simulate_ideal_cache, simulate_ram)
    from .simulations.common import EM_ROUND_FACTOR, IC_ROUND_FACTOR
    from .simulations.programs import EM_CORPUS, IC_CORPUS, RAM_CORPUS

    def ram_native(c):
        mem, regs, _ = run_native_ram(c.program, c.memory)
        return mem, regs

    def ram_sim(c, **kw):
        r = simulate_ram(c.program, c.memory, **kw)
        return r, (r.memory, r.state[1:])

    def round_native(native):
        def run(c):
            mem, st, _ = native(c.program, c.memory)
            return mem, st
        return run

    def round_sim(sim):
        def run(c, **kw):
            r = sim(c.program, c.memory, **kw)
            return r, (r.memory, r.state)
        return run

    return [("ram", RAM_CORPUS, ram_native, ram_sim, None),
            ("em", EM_CORPUS, round_native(run_native_em), round_sim(simulate_em),
             EM_ROUND_FACTOR),
            ("ic", IC_CORPUS, round_native(run_native_ic), round_sim(simulate_ideal_cache),
             IC_ROUND_FACTOR)]


def simulation_case(kind, case, native, sim, factor, schedules=50, cf=0.25) -> Check:
    want = native(case)
    base, got = sim(case, log=True)
    bad = []
    if got != want:
        bad.append("fault-free run differs from the native interpreter")
    war = _war_clean(base.machine)
    if war:
        bad.append(f"{war} capsules with WAR conflicts")
    C = base.report.C
    f = cf / C
    for s in range(schedules):
        r, got = sim(case, faults=FaultModel(f=f, seed=s), seed=s)
        if got != want:
            bad.append(f"schedule {s} differs")
    detail = f"{schedules} schedules at C*f={cf}"
    if factor is not None:
        L = case.program.M // case.program.B
        worst = max(base.round_transfers)
        if worst > factor * L:
            bad.append(f"round with {worst} transfers > {factor}*M/B={factor * L}")
        detail += f", worst round {worst} <= {factor}*{L}"
    return Check(f"simulations/{kind}/{case.name}", not bad, "; ".join(bad[:3]) or detail)


def ram_replays(capsules=10_000) -> Check:
    """Mean runs per capsule at k*f = 1/2, pooled over seeds until ``capsules`` are seen."""
    from .simulations import simulate_ram
    from .simulations.programs import RAM_CORPUS
    case = next(c for c in RAM_CORPUS if c.name == "collatz")
    k = simulate_ram(case.program, case.memory).report.C
    f = Fraction(1, 2 * k)
    hist: dict[int, int] = {}
    seed = 0
    while sum(hist.values()) < capsules:
        r = simulate_ram(case.program, case.memory, faults=FaultModel(f=float(f), seed=seed),
                         seed=seed)
        for e, n in r.machine.executions_hist.items():
            hist[e] = hist.get(e, 0) + n
        seed += 1
    n = sum(hist.values())
    mean = sum(e * c for e, c in hist.items()) / n
    return Check("simulations/ram-mean-runs", mean <= 2,
                 f"{mean:.3f} runs per capsule over {n} capsules (k={k}, k*f=1/2)")


def commit_sweep() -> list[Check]:
    """A soft fault at every persistent access of one writing EM and ideal-cache run."""
    from .simulations import run_native_em, run_native_ic, simulate_em, simulate_ideal_cache
    from .simulations.programs import EM_CORPUS, IC_CORPUS
    out = []
    for kind, case, native, sim in (("em", EM_CORPUS[2], run_native_em, simulate_em),
                                    ("ic", IC_CORPUS[2], run_native_ic, simulate_ideal_cache)):
        want, _, _ = native(case.program, case.memory)
        trials = sim(case.program, case.memory).machine.engine.trials
        bad = [o for o in range(trials)
               if sim(case.program, case.memory,
                      faults=FaultModel(script=[(0, o, "soft")])).memory != want]
        out.append(Check(f"simulations/{kind}-fault-sweep/{case.name}", not bad,
                         f"faults at {bad[:5]} change memory" if bad
                         else f"{trials} fault positions, commits included"))
    return out


def suite_simulations(schedules: int = 50) -> list[Check]:
    checks = []
    for kind, corpus, native, sim, factor in _sim_cases():
        checks.append(Check(f"simulations/{kind}-corpus-size", len(corpus) >= 20,
                            f"{len(corpus)} programs"))
        for case in corpus:
            checks.append(simulation_case(kind, case, native, sim, factor, schedules))
    checks.extend(commit_sweep())
    checks.append(ram_replays())
    return checks


# -- algorithms ------------------------------------------------------------------

def _inputs(seed=0):
    rng = random.Random(seed)
    vals = [rng.randrange(1000) for _ in range(300)]
    a = sorted(rng.randrange(100) for _ in range(150))
    b = sorted(rng.randrange(100) for _ in range(170))
    keys = [rng.randrange(500) for _ in range(400)]
    ma = [[rng.randrange(1 << 64) for _ in range(16)] for _ in range(16)]
    mb = [[rng.randrange(1 << 64) for _ in range(16)] for _ in range(16)]
    return vals, a, b, keys, ma, mb


def algorithm_runs(seed=0):
    """(name, run(**machine_kw) -> AlgoResult, expected output) for each algorithm."""
    from .algorithms import (matmul, merge, merge_lists, multiply, native_prefix, prefix_sum,
                             sort)
    vals, a, b, keys, ma, mb = _inputs(seed)
    return [
        ("prefix_sum", lambda **kw: prefix_sum(vals, B=4, **kw), native_prefix(vals)),
        ("merge", lambda **kw: merge(a, b, B=4, **kw), merge_lists(a, b)),
        ("sort", lambda **kw: sort(keys, M=64, B=4, **kw), sorted(keys)),
        ("matmul", lambda **kw: matmul(ma, mb, M=64, B=4, **kw), multiply(ma, mb)),
    ]


def algorithm_check(name, run, want, schedules=10, cf=0.25) -> Check:
    from .algorithms import capsule_scans
    bad = []
    base = run()
    if base.output != want:
        bad.append("fault-free output differs from the oracle")
    logged = run(P=3, log=True)
    war, race = capsule_scans(logged.machine)
    if logged.output != want:
        bad.append("P=3 output differs")
    if war or race:
        bad.append(f"{war} WAR-conflicted and {race} racy capsules")
    f = cf / base.C
    for s in range(schedules):
        hard = 0.2 if s % 2 else 0.0
        r = run(P=4, faults=FaultModel(f=f, seed=s, hard_fraction=hard), seed=s)
        if r.output != want:
            bad.append(f"schedule {s} (hard_fraction={hard}) differs")
    return Check(f"algorithms/{name}", not bad, "; ".join(bad[:3]) or
                 f"oracle match, scans clean, {schedules} schedules at C*f={cf} on P=4")


def suite_algorithms(schedules: int = 10) -> list[Check]:
    from .algorithms import prefix_sum, sum_tree_ok
    checks = [algorithm_check(name, run, want, schedules)
              for name, run, want in algorithm_runs()]
    vals = _inputs()[0]
    r = prefix_sum(vals, B=4)
    checks.append(Check("algorithms/sum-tree", sum_tree_ok(r.machine, r.info["tree"], len(vals), 4),
                        "every internal node equals the fold of its children"))
    return checks


# -- bounds ----------------------------------------------------------------------

TREE = dict(P=2, M=64, Mp=1 << 16, B=4, S=16)
TREE_FORKS = 31


def tree_C() -> int:
    return run_tree(MachineConfig(**TREE), TREE_FORKS).result.report.C


def tree_runs(cf, runs, C=None):
    C = C or tree_C()
    f = cf / C
    cfg = MachineConfig(**TREE)
    out = []
    for s in range(runs):
        faults = FaultModel(f=f, seed=s) if f else None
        r = run_tree(cfg, TREE_FORKS, seed=s, faults=faults)
        out.append((r.result.report, r.machine.max_executions))
    return out


def inflation_suite(runs=1000, cfs=(0.1, 0.25, 0.5)) -> list[Check]:
    C = tree_C()
    checks = []
    zero = tree_runs(0, min(runs, 50), C)
    exact = all(rep.W_f == rep.W and rep.T_f == rep.T for rep, _ in zero)
    checks.append(Check("bounds/ratio-at-f0", exact, f"W_f == W in {len(zero)} runs"))
    for cf in cfs:
        res = tree_runs(cf, runs, C)
        v = inflation_check([rep for rep, _ in res], C, Fraction(cf).limit_denominator(100) / C)
        checks.append(Check(f"bounds/inflation@{cf}", v.ok,
                            f"mean W_f/W={v.mean_ratio:.4f} <= {v.bound:.4f}*1.1 over {v.n} runs"))
        ok = 0
        worst = 0
        for rep, execs in res:
            l = restart_bound(rep.W, C, Fraction(cf).limit_denominator(100) / C,
                              Fraction(2, rep.W))
            replays = execs - 1
            worst = max(worst, replays)
            ok += replays <= l
        checks.append(Check(f"bounds/restarts@{cf}", ok >= 0.99 * runs,
                            f"{ok}/{runs} runs within l; most replays {worst}"))
    return checks


def suite_bounds(runs: int = 200) -> list[Check]:
    checks = inflation_suite(runs)
    from .algorithms import matmul, merge, prefix_sum, sort
    rs = [prefix_sum(range(64)), merge(range(0, 64, 2), range(1, 64, 2)),
          sort(range(100, 0, -1)), matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]])]
    exact = all(r.report.W_f == r.report.W and not r.report.violations() for r in rs)
    checks.append(Check("bounds/algorithms-at-f0", exact, "W_f == W and report invariants hold"))
    return checks
