"""Batch runner: ``ppmsim --config FILE --workload NAME --seeds A..B --out DIR``.

The config file is flat ``key=value`` text, one pair per line, ``#`` starts
a comment. Machine keys: P, M, Mp, B, S, step_budget, strategy
(round-robin | seeded-random). Fault keys: f, or cf (f = cf / C with C
taken from a fault-free run of the same workload), hard_fraction, script
(JSON fault script). Workload keys: n, forks, op, exclusive, input
(whitespace-separated integers), program, data_seed, trace (0/1), seeds.

For every seed the runner writes ``trace-<seed>.jsonl`` and an ``output-
<seed>.txt``; ``report.csv`` holds one row per seed in seed order and
``summary.json`` the aggregate. Exit status: 0 pass, 1 failed check,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import random
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .faults import FaultModel
from .machine import DEFAULT_STEP_BUDGET, MachineTimeout, make_strategy
from .memory import MachineConfig, ModelViolation, SchedulerBug
from .metrics import inflation_factor, write_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

INT_KEYS = {"P", "M", "Mp", "B", "S", "step_budget", "n", "forks", "exclusive", "data_seed",
            "trace"}
FLOAT_KEYS = {"f", "cf", "hard_fraction"}
STR_KEYS = {"strategy", "script", "op", "input", "program", "seeds"}


class UsageError(Exception):
    pass


def parse_config(text: str) -> dict:
    cfg = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {no}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in cfg:
            raise UsageError(f"config line {no}: duplicate key {key!r}")
        try:
            if key in INT_KEYS:
                cfg[key] = int(value, 0)
            elif key in FLOAT_KEYS:
                cfg[key] = float(value)
            elif key in STR_KEYS:
                cfg[key] = value
            else:
                raise UsageError(f"config line {no}: unknown key {key!r}")
        except ValueError:
            raise UsageError(f"config line {no}: bad value {value!r} for {key}") from None
    if "f" in cfg and "cf" in cfg:
        raise UsageError("give either f or cf, not both")
    return cfg


def parse_seeds(spec: str) -> list[int]:
    """``A..B`` (inclusive), ``A,B,C`` or a single integer."""
    try:
        if ".." in spec:
            a, b = spec.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty seed range {spec!r}")
            return list(range(lo, hi + 1))
        return [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {spec!r}") from None


def read_ints(path: str) -> list[int]:
    try:
        return [int(t, 0) for t in Path(path).read_text().split()]
    except OSError as e:
        raise UsageError(f"cannot read input {path}: {e}") from None
    except ValueError:
        raise UsageError(f"input {path} holds a non-integer token") from None


# -- workloads -------------------------------------------------------------------

@dataclass
class Outcome:
    report: object
    machine: object
    output: list
    expected: list
    problem: str = ""

    @property
    def ok(self) -> bool:
        return not self.problem and self.output == self.expected and not self.report.violations()


@dataclass
class Workload:
    run: Callable  # (cfg, data, run_kw) -> Outcome
    data: Callable  # cfg -> workload input


def _rng(cfg):
    return random.Random(cfg.get("data_seed", 0))


def _values(cfg, default_n):
    if "input" in cfg:
        return read_ints(cfg["input"])
    rng = _rng(cfg)
    return [rng.randrange(1 << 20) for _ in range(cfg.get("n", default_n))]


def _flat(x):
    x = list(x)
    if x and isinstance(x[0], list):
        return [v for row in x for v in row]
    return x


def _run_tree(cfg, _, kw):
    from .algorithms.runtime import deque_capacity
    from .forkjoin import leaf_value, run_tree
    B, P = cfg.get("B", 4), cfg.get("P", 2)
    conf = MachineConfig(P=P, M=cfg.get("M", 64), Mp=cfg.get("Mp", 1 << 20), B=B,
                         S=cfg.get("S", deque_capacity(P)))
    forks = cfg.get("forks", 63)
    r = run_tree(conf, forks, step_budget=cfg.get("step_budget", DEFAULT_STEP_BUDGET), **kw)
    inp = [(i * 7919 + kw["seed"]) % 1000 for i in range((forks + 1) * B)]
    want = [leaf_value(v) for v in inp] + [sum(inp) & ((1 << 64) - 1)]
    ok = r.scheduler.exactly_once_ok() and not r.scheduler.violations
    return Outcome(r.result.report, r.machine, r.out + [r.total], want,
                   "" if ok else "scheduler check failed")


def _algorithm(call, oracle):
    def run(cfg, data, kw):
        kw = dict(kw, **{k: cfg[k] for k in ("P", "M", "B", "S", "Mp", "step_budget") if k in cfg})
        r = call(data, cfg, kw)
        return Outcome(r.report, r.machine, _flat(r.output), _flat(oracle(data, cfg)))
    return run


def _prefix(data, cfg, kw):
    from .algorithms import prefix_sum
    return prefix_sum(data, op=cfg.get("op", "add"), exclusive=bool(cfg.get("exclusive", 0)), **kw)


def _prefix_oracle(data, cfg):
    from .algorithms import native_prefix
    return native_prefix(data, cfg.get("op", "add"), bool(cfg.get("exclusive", 0)))


def _merge_data(cfg):
    vals = _values(cfg, 1024)
    h = len(vals) // 2
    return sorted(vals[:h]), sorted(vals[h:])


def _merge(data, cfg, kw):
    from .algorithms import merge
    return merge(*data, **kw)


def _sort(data, cfg, kw):
    from .algorithms import sort
    return sort(data, **kw)


def _matmul_data(cfg):
    if "input" in cfg:
        vals = read_ints(cfg["input"])
        n = int(round((len(vals) / 2) ** 0.5))
        if 2 * n * n != len(vals):
            raise UsageError("matmul input must hold 2*n*n integers (A then B, row-major)")
    else:
        n = cfg.get("n", 16)
        rng = _rng(cfg)
        vals = [rng.randrange(1 << 16) for _ in range(2 * n * n)]
    a = [vals[r * n:(r + 1) * n] for r in range(n)]
    b = [vals[n * n + r * n:n * n + (r + 1) * n] for r in range(n)]
    return a, b


def _matmul(data, cfg, kw):
    from .algorithms import matmul
    return matmul(*data, **kw)


def _matmul_oracle(data, cfg):
    from .algorithms import multiply
    return multiply(*data)


def _sim_case(kind, cfg):
    """(program, initial memory): a corpus program by name, or a RAM source file."""
    from .simulations.programs import EM_CORPUS, IC_CORPUS, RAM_CORPUS
    corpus = {"ram": RAM_CORPUS, "em": EM_CORPUS, "ic": IC_CORPUS}[kind]
    name = cfg.get("program")
    if kind == "ram" and name and Path(name).is_file():
        from .simulations import RamError, parse_ram
        mem = read_ints(cfg["input"]) if "input" in cfg else [0] * cfg.get("n", 16)
        try:
            return parse_ram(Path(name).read_text(), Path(name).stem), mem
        except RamError as e:
            raise UsageError(f"{name}: {e}") from None
    names = [c.name for c in corpus]
    if name is None:
        name = names[0]
    for c in corpus:
        if c.name == name:
            return c.program, list(c.memory)
    raise UsageError(f"unknown {kind} program {name!r}; choose from {', '.join(names)}")


def _simulation(kind):
    def run(cfg, data, kw):
        from . import simulations as sims
        prog, mem = data
        if kind == "ram":
            want = sims.run_native_ram(prog, mem)[0]
            r = sims.simulate_ram(prog, mem, B=cfg.get("B", 1), **kw)
        elif kind == "em":
            want = sims.run_native_em(prog, mem)[0]
            r = sims.simulate_em(prog, mem, **kw)
        else:
            want = sims.run_native_ic(prog, mem)[0]
            r = sims.simulate_ideal_cache(prog, mem, **kw)
        return Outcome(r.report, r.machine, list(r.memory), list(want))
    return run


WORKLOADS = {
    "tree": Workload(_run_tree, lambda cfg: None),
    "prefix_sum": Workload(_algorithm(_prefix, _prefix_oracle), lambda cfg: _values(cfg, 1024)),
    "merge": Workload(_algorithm(_merge, lambda d, c: sorted(d[0] + d[1])), _merge_data),
    "sort": Workload(_algorithm(_sort, lambda d, c: sorted(d)), lambda cfg: _values(cfg, 1024)),
    "matmul": Workload(_algorithm(_matmul, _matmul_oracle), _matmul_data),
    "ram": Workload(_simulation("ram"), lambda cfg: _sim_case("ram", cfg)),
    "em": Workload(_simulation("em"), lambda cfg: _sim_case("em", cfg)),
    "ic": Workload(_simulation("ic"), lambda cfg: _sim_case("ic", cfg)),
}


def _faults(cfg, seed, C):
    if "script" in cfg:
        try:
            return FaultModel.from_script_file(cfg["script"], seed=seed,
                                               hard_fraction=cfg.get("hard_fraction", 0.0))
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"bad fault script {cfg['script']}: {e}") from None
    f = cfg.get("f", 0.0)
    if "cf" in cfg:
        f = cfg["cf"] / C
    if f == 0:
        return None
    try:
        return FaultModel(f=f, hard_fraction=cfg.get("hard_fraction", 0.0), seed=seed)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _strategy(cfg, seed):
    try:
        return make_strategy(cfg.get("strategy", "round-robin"), seed)
    except ValueError as e:
        raise UsageError(str(e)) from None


# a run that breaks the machine model fails its seed instead of aborting the batch
RUN_ERRORS = (ModelViolation, SchedulerBug, MachineTimeout)


def run_experiment(cfg: dict, workload: str, seeds: list[int], out: Path,
                   echo=print) -> int:
    if workload not in WORKLOADS:
        raise UsageError(f"unknown workload {workload!r}; choose from {', '.join(WORKLOADS)}")
    wl = WORKLOADS[workload]
    data = wl.data(cfg)
    trace = bool(cfg.get("trace", 1))
    C = None
    if "cf" in cfg:
        try:
            base = wl.run(cfg, data, dict(faults=None, strategy=_strategy(cfg, 0), seed=0,
                                          log=False))
        except RUN_ERRORS as e:
            echo(f"fault-free base run: FAIL {type(e).__name__}: {e}")
            return EXIT_FAIL
        C = base.report.C
    out.mkdir(parents=True, exist_ok=True)
    reports, failures = [], []
    for seed in seeds:
        kw = dict(faults=_faults(cfg, seed, C), strategy=_strategy(cfg, seed), seed=seed,
                  log=trace)
        try:
            res = wl.run(cfg, data, kw)
        except RUN_ERRORS as e:
            failures.append(seed)
            echo(f"seed {seed}: FAIL {type(e).__name__}: {e}")
            continue
        if trace:
            with open(out / f"trace-{seed}.jsonl", "w") as fh:
                res.machine.log.write_jsonl(fh)
        (out / f"output-{seed}.txt").write_text(" ".join(map(str, res.output)) + "\n")
        reports.append(res.report)
        if not res.ok:
            failures.append(seed)
            echo(f"seed {seed}: FAIL {res.problem or 'output differs from the oracle'}"
                 f"{'; ' + ', '.join(res.report.violations()) if res.report.violations() else ''}")
    with open(out / "report.csv", "w") as fh:
        write_csv(reports, fh)
    summary = {"workload": workload, "seeds": len(seeds), "failures": failures,
               "mean_inflation": statistics.fmean(r.inflation for r in reports) if reports else None,
               "max_C": max((r.C for r in reports), default=None)}
    if C is not None:
        summary["C"] = C
        summary["inflation_bound"] = float(inflation_factor(C, cfg["cf"] / C))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    mean = summary["mean_inflation"]
    echo(f"{workload}: {len(seeds)} seeds, {len(failures)} failures, "
         f"mean W_f/W = {'n/a' if mean is None else format(mean, '.4f')}")
    return EXIT_FAIL if failures else EXIT_OK


def run_verify(suite: str, echo=print) -> int:
    from .verify import SUITES, run_suite
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    checks = run_suite(suite)
    for c in checks:
        echo(c.line())
    failed = sum(not c.ok for c in checks)
    echo(f"{suite}: {len(checks) - failed}/{len(checks)} passed")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppmsim", description="Parallel-PM simulator batch runner")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--workload", help=f"one of {', '.join(WORKLOADS)}")
    p.add_argument("--seeds", help="A..B, A,B,C or N (overrides the config's seeds)")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--verify", metavar="SUITE", help="run a verification suite instead")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        if args.verify:
            if args.workload:
                raise UsageError("--verify and --workload are exclusive")
            return run_verify(args.verify)
        if not args.workload:
            raise UsageError("give --workload NAME or --verify SUITE")
        cfg = {}
        if args.config:
            try:
                cfg = parse_config(Path(args.config).read_text())
            except OSError as e:
                raise UsageError(f"cannot read config: {e}") from None
        seeds = parse_seeds(args.seeds or cfg.get("seeds", "0"))
        return run_experiment(cfg, args.workload, seeds, Path(args.out))
    except (UsageError, ValueError) as e:  # ValueError: parameters the machine rejects
        print(f"ppmsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
