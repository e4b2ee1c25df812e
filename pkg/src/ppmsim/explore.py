"""Exhaustive interleaving and crash-point exploration, plus the history checkers.

The explorer rebuilds the machine from a factory for every path and
replays a decision prefix, since generators cannot be copied. Only
accesses to ``visible`` addresses (and every CAS/CAM) are interleaving
points; private accesses run eagerly, which is sound because they commute
with every other processor's step. Every persistent access is still a
crash point while the fault budget lasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .capsules import CAM_OP, CAS_OP, CHOOSE, INSTALL, READ, WRITE, YIELD
from .faults import HARD, SOFT
from .memory import CAM, CAS, EXT_READ, EXT_WRITE, LOCAL_READ, LOCAL_WRITE, AccessLog

MAX_PROCS = 3
MAX_RECORDS = 5000


class ScaleGuard(RuntimeError):
    """The request is beyond what an exhaustive tool can honestly cover."""


@dataclass
class ExploreStats:
    paths: int = 0
    nodes: int = 0
    pruned: int = 0
    max_visible: int = 0


@dataclass
class Explorer:
    """Depth-first search over schedules of a small machine.

    ``build()`` must return a fresh, booted machine (before ``prepare``).
    ``on_final(machine, path)`` is called once per explored terminal state.
    """

    build: Callable
    max_faults: int = 0
    hard: bool = False
    visible: Optional[Callable[[int], bool]] = None
    prune: bool = True
    max_visible: int = 12
    max_nodes: int = 2_000_000
    fault_procs: Optional[tuple] = None

    def _machine(self, path):
        m = self.build()
        if m.P > MAX_PROCS:
            raise ScaleGuard(f"exhaustive exploration is limited to {MAX_PROCS} processors")
        m.track_results = True
        state = {"choice": None}
        m.choice_hook = lambda p, n: state["choice"]
        m.prepare()
        visible_count = 0
        for d in path:
            visible_count += self._apply_decision(m, state, d)
        return m, state, visible_count

    def _apply_decision(self, m, state, d) -> int:
        p, fault, choice = d
        vis = self._is_visible(m, m.procs[p].pending)
        state["choice"] = choice
        m.step(p, fault)
        return int(vis)

    def _is_visible(self, m, op) -> bool:
        code = op[0]
        if code in (CAS_OP, CAM_OP):
            return True
        if code in (READ, WRITE):
            return self.visible is None or self.visible(op[1])
        if code == INSTALL:
            return False
        return False

    def _options(self, m, faults_used):
        enabled = [p for p in range(m.P) if not m.procs[p].halted and m.engine.live[p]]
        if m.done_addr is not None and m.words[m.done_addr]:
            return []
        opts = []
        can_fault = faults_used < self.max_faults

        def with_faults(p, op):
            out = [(p, None, None)]
            if can_fault and op[0] not in (YIELD, CHOOSE) and (
                    self.fault_procs is None or p in self.fault_procs):
                out.append((p, SOFT, None))
                if self.hard and p != m.engine.model.exempt:
                    out.append((p, HARD, None))
            return out

        for p in enabled:
            op = m.procs[p].pending
            if op[0] == CHOOSE:
                return [(p, None, v) for v in range(op[1])]
            if op[0] == YIELD or not self._is_visible(m, op):
                return with_faults(p, op)
        for p in enabled:
            opts.extend(with_faults(p, m.procs[p].pending))
        return opts

    def _key(self, m, faults_used):
        return (tuple(m.words), faults_used, tuple(m.engine.live),
                tuple((pr.halted, tuple(pr.results)) for pr in m.procs))

    def run(self, on_final: Callable) -> ExploreStats:
        """Depth-first: the first child continues on the live machine, siblings are replayed."""
        stats = ExploreStats()
        seen = set()
        stack = [((), 0)]
        while stack:
            path, faults_used = stack.pop()
            m, state, nvis = self._machine(path)
            while True:
                stats.nodes += 1
                if stats.nodes > self.max_nodes:
                    raise ScaleGuard(f"more than {self.max_nodes} exploration nodes")
                stats.max_visible = max(stats.max_visible, nvis)
                if nvis > self.max_visible:
                    raise ScaleGuard(f"path exceeds {self.max_visible} shared accesses")
                if self.prune:
                    k = self._key(m, faults_used)
                    if k in seen:
                        stats.pruned += 1
                        break
                    seen.add(k)
                opts = self._options(m, faults_used)
                if not opts:
                    stats.paths += 1
                    on_final(m, path)
                    break
                for d in reversed(opts[1:]):
                    stack.append((path + (d,), faults_used + (d[1] is not None)))
                d = opts[0]
                nvis += self._apply_decision(m, state, d)
                path = path + (d,)
                faults_used += d[1] is not None
        return stats


# -- atomic idempotence -----------------------------------------------------------

@dataclass
class AtomicityVerdict:
    capsule: int
    ok: bool
    position: Optional[int] = None  # witness: foreign records placed before the capsule
    reason: str = ""
    tried: int = 0


def _apply(words, r, check: bool) -> bool:
    """Apply one access to ``words``; report whether its logged outcome is reproduced."""
    if r.kind == EXT_READ:
        return not check or tuple(words[r.addr:r.addr + len(r.value)]) == r.value
    if r.kind == EXT_WRITE:
        words[r.addr:r.addr + len(r.value)] = r.value
        return True
    exp, new = r.value
    ok = words[r.addr] == exp
    if ok:
        words[r.addr] = new
    return ok == r.ok


def persistent_records(log: AccessLog):
    return [r for r in log.records if r.kind not in (LOCAL_READ, LOCAL_WRITE)]


def atomic_idempotence_check(log: AccessLog, capsule: int, machine,
                             max_records: int = MAX_RECORDS) -> AtomicityVerdict:
    """Search for an adjacent placement of ``capsule`` inside its window.

    A placement is valid when every foreign access and every access of the
    capsule's completed run still observes its logged outcome (reads of
    runs cut short by a fault are discarded with the run), and the memory
    right after the block equals one fault-free solo run of the capsule
    from the memory at that point. ``machine`` supplies the capsule code.
    """
    if capsule not in log.windows:
        raise KeyError(f"unknown capsule {capsule}")
    hist = persistent_records(log)
    if len(hist) > max_records:
        raise ScaleGuard(f"history of {len(hist)} records exceeds {max_records}")
    proc, t0, t1 = log.windows[capsule]
    if t1 is None:
        raise ValueError(f"capsule {capsule} never completed")
    mine = [r for r in hist if r.capsule == capsule]
    last = max(r.run for r in mine)
    others = [r for r in hist if r.capsule != capsule]
    # gap k (between others[k-1] and others[k]) must overlap the window (t0, t1)
    positions = {k for k in range(len(others) + 1)
                 if (k == 0 or others[k - 1].ts < t1) and (k == len(others) or others[k].ts > t0)}
    prefix_words = list(log.initial_memory)
    verdict = AtomicityVerdict(capsule, False, reason="no consistent placement")
    for k in range(len(others) + 1):
        if k in positions:
            verdict.tried += 1
            ok, why = _try_position(prefix_words, mine, others[k:], last, machine, proc)
            if ok:
                return AtomicityVerdict(capsule, True, k, "", verdict.tried)
            verdict.reason = why
        if k < len(others):
            _apply(prefix_words, others[k], check=False)
    return verdict


def _try_position(prefix_words, mine, rest, last_run, machine, proc):
    w = list(prefix_words)
    base = tuple(w)
    for r in mine:
        # CAS/CAM outcomes of faulted runs still shape memory, so they must hold too
        check = r.run == last_run or r.kind in (CAS, CAM)
        if not _apply(w, r, check) and check:
            return False, f"capsule access at ts={r.ts} sees a different outcome when moved"
    after_block = list(w)
    for r in rest:
        if not _apply(w, r, check=True):
            return False, f"foreign access at ts={r.ts} sees a different value"
    solo = solo_effect(machine, base, proc)
    if solo != after_block:
        diff = [i for i in range(len(solo)) if solo[i] != after_block[i]][:4]
        return False, f"moved block differs from one fault-free run at words {diff}"
    return True, ""


def solo_effect(machine, words, proc: int) -> list:
    """Memory after ``proc`` runs its installed capsule once, alone, without faults."""
    m = machine.solo_clone(words, proc)
    pr = m.procs[proc]
    start = pr.capsule
    steps = 0
    while not pr.halted and pr.capsule == start:
        m.step(proc)
        steps += 1
        if steps > 100_000:
            raise ScaleGuard("solo replay did not reach an install")
    return list(m.words)


# -- sequential consistency ---------------------------------------------------------

def sequentially_consistent(log: AccessLog, max_records: int = 12) -> Optional[list]:
    """A total order of the persistent accesses that respects every processor's
    program order and reproduces each logged read/CAS outcome, or None."""
    hist = persistent_records(log)
    if len(hist) > max_records:
        raise ScaleGuard(f"{len(hist)} accesses exceed the exhaustive bound {max_records}")
    per = {}
    for r in hist:
        per.setdefault(r.proc, []).append(r)
    procs = sorted(per)
    if len(procs) > MAX_PROCS:
        raise ScaleGuard("sequential-consistency search is limited to 3 processors")
    seqs = [per[p] for p in procs]
    start = list(log.initial_memory)
    seen = set()

    def dfs(pos, words, order):
        if all(pos[i] == len(seqs[i]) for i in range(len(seqs))):
            return list(order)
        key = (tuple(pos), tuple(words))
        if key in seen:
            return None
        seen.add(key)
        for i, s in enumerate(seqs):
            if pos[i] < len(s):
                r = s[pos[i]]
                w = list(words)
                if _apply(w, r, check=True):
                    pos[i] += 1
                    order.append(r)
                    got = dfs(pos, w, order)
                    if got is not None:
                        return got
                    order.pop()
                    pos[i] -= 1
        return None

    return dfs([0] * len(seqs), start, [])
