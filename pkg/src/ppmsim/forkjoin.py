"""Binary fork-join on top of the work-stealing scheduler.

``fork2`` turns the running capsule into a fork point: it writes the
continuation ``K``, two join closures and the two child closures, pushes
the right child as a job and continues with the left one. Each child
ends by returning into its join closure; the join CAMs a counter from 0
to its side, and whichever side arrives second resumes ``K``. Results
travel through words the parent allocated and passed down as arguments.

Pools are zero-filled and never reused, so a fresh join counter needs no
initialising write.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .capsules import NIL, capsule
from .machine import Machine, RunResult
from .memory import MachineConfig, WORD_MASK
from .scheduler import WorkStealingScheduler, end_thread, fork

JOIN_LEFT, JOIN_RIGHT = 1, 2


def fork2(ctx, left, right, then):
    """Run capsules ``left`` and ``right`` in parallel, then ``then``.

    Each is a ``(capsule name, args)`` pair; ``then`` inherits the current
    continuation. Must be the last thing a capsule does.
    """
    J = ctx.alloc(1)
    K = yield from ctx.closure(then[0], then[1], cont=ctx.cont)
    JL = yield from ctx.closure("fj.join", (J, JOIN_LEFT), cont=K)
    JR = yield from ctx.closure("fj.join", (J, JOIN_RIGHT), cont=K)
    L = yield from ctx.closure(left[0], left[1], cont=JL)
    R = yield from ctx.closure(right[0], right[1], cont=JR)
    yield from fork(ctx, R, L)


@capsule("fj.join", user=False)
def join(ctx):
    J, side = ctx.args
    ctx.join_meta(ctx.cont)
    a = yield from ctx.machine.scheduler.fill(ctx, "join2", (J, side), cont=ctx.cont)
    yield ctx.cam(J, 0, side)
    yield ctx.install(a)


@capsule("fj.join2", user=False)
def join_check(ctx):
    J, side = ctx.args
    first = yield ctx.read(J)
    if first == side:
        yield from end_thread(ctx)
    else:
        yield ctx.ret()


@capsule("fj.done", user=False)
def finish(ctx):
    (flag,) = ctx.args
    yield ctx.write(flag, 1)
    yield ctx.halt()


def prepare_forkjoin(machine: Machine, root: str, args=(), root_proc: int = 0) -> WorkStealingScheduler:
    """Lay out the scheduler and make ``root(args)`` the first thread."""
    flag = machine.setup_alloc(1)
    done = machine.setup_closure("fj.done", [flag])
    root_closure = machine.setup_closure(root, list(args), cont=done)
    machine.done_addr = flag
    machine.track_dag = True
    return WorkStealingScheduler(machine, root_closure, root_proc)


# -- a reference workload: transform + reduce over a binary tree of forks --------

def leaf_value(v: int) -> int:
    return (v * 2654435761 + 12345) & WORD_MASK


@capsule("fj.tree")
def tree(ctx):
    """Blocks [lo, hi) of ``inp``: out[i] = leaf_value(inp[i]); res = sum of inputs."""
    lo, hi, inp, out, res = ctx.args
    B = ctx.B
    if hi - lo == 1:
        vals = yield from ctx.read_range(inp + lo * B, B)
        yield from ctx.write_range(out + lo * B, [leaf_value(v) for v in vals])
        yield ctx.write(res, sum(vals) & WORD_MASK)
        yield ctx.ret()
        return
    mid = (lo + hi) // 2
    r = ctx.alloc(2 * B)
    yield from fork2(ctx, ("fj.tree", (lo, mid, inp, out, r)),
                     ("fj.tree", (mid, hi, inp, out, r + B)),
                     ("fj.add", (r, r + B, res)))


@capsule("fj.add")
def add(ctx):
    a, b, res = ctx.args
    x = yield ctx.read(a)
    y = yield ctx.read(b)
    yield ctx.write(res, (x + y) & WORD_MASK)
    yield ctx.ret()


@dataclass
class TreeRun:
    result: RunResult
    scheduler: WorkStealingScheduler
    out: list
    total: int
    machine: Machine


def tree_workload(config: MachineConfig, forks: int, machine_kw: Optional[dict] = None,
                  seed: int = 0) -> tuple[Machine, WorkStealingScheduler, int, int]:
    """Machine prepared for a tree of ``forks`` forks (``forks + 1`` leaf blocks)."""
    kw = dict(machine_kw or {})
    kw.setdefault("seed", seed)
    m = Machine(config, **kw)
    n = (forks + 1) * config.B
    inp = m.setup_alloc(n)
    out = m.setup_alloc(n)
    res = m.setup_alloc(1)
    m.poke(inp, [(i * 7919 + seed) % 1000 for i in range(n)])
    s = prepare_forkjoin(m, "fj.tree", (0, forks + 1, inp, out, res))
    return m, s, out, res


def run_tree(config: MachineConfig, forks: int, seed: int = 0, **machine_kw) -> TreeRun:
    m, s, out, res = tree_workload(config, forks, machine_kw, seed)
    r = m.run()
    n = (forks + 1) * config.B
    return TreeRun(r, s, m.peek(out, n), m.peek(res)[0], m)
