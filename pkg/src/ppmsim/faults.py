"""Fault injection and the liveness oracle."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

NONE = None
SOFT = "soft"
HARD = "hard"


@dataclass
class FaultModel:
    """Per-trial fault probability ``f`` with a soft/hard split.

    Trial points are the persistent accesses of a live processor. A
    ``script`` of ``(proc, ordinal, kind)`` triples replaces the random draw
    entirely; ordinals count a processor's trial points from 0. With
    ``overlay`` the script is applied on top of the random draw instead.
    """

    f: float = 0.0
    hard_fraction: float = 0.0
    seed: int = 0
    script: Optional[list] = None
    exempt: int = 0  # never hard-faults
    overlay: bool = False

    def __post_init__(self):
        if not 0.0 <= self.f <= 0.5:
            raise ValueError(f"fault probability must be in [0, 1/2], got {self.f}")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ValueError("hard_fraction must be in [0, 1]")
        if self.script is not None:
            self.script = [tuple(s) for s in self.script]
            for proc, ordinal, kind in self.script:
                if kind not in (SOFT, HARD):
                    raise ValueError(f"unknown fault kind {kind!r}")
                if kind == HARD and proc == self.exempt:
                    raise ValueError(f"processor {proc} is exempt from hard faults")

    @classmethod
    def from_script_file(cls, path, **kw) -> "FaultModel":
        with open(path) as fh:
            rows = json.load(fh)
        return cls(script=[(r["proc"], r["ordinal"], r["kind"]) for r in rows], **kw)


@dataclass
class FaultEngine:
    model: FaultModel
    P: int
    live: list = field(default_factory=list)
    ordinal: list = field(default_factory=list)
    trials: int = 0
    faults: int = 0

    def __post_init__(self):
        self.live = [True] * self.P
        self.ordinal = [0] * self.P
        self.rng = random.Random(self.model.seed)
        self.scramble_rng = random.Random(self.model.seed ^ 0x5EED)
        self._scripted = None
        if self.model.script is not None:
            self._scripted = {(p, o): k for p, o, k in self.model.script}
        self._f = self.model.f
        self._hard = self.model.hard_fraction

    def isLive(self, proc: int) -> bool:
        return self.live[proc]

    is_live = isLive

    def maybe_fault(self, proc: int) -> Optional[str]:
        """Consume one trial point of ``proc``; report the fault drawn, if any."""
        o = self.ordinal[proc]
        self.ordinal[proc] = o + 1
        self.trials += 1
        kind = None
        if self._scripted is not None:
            kind = self._scripted.get((proc, o))
        if (self._scripted is None or self.model.overlay) and self._f:
            # draw even under a scripted hit so the random stream stays aligned
            drawn = self._draw(proc)
            kind = kind or drawn
        if kind is None:
            return None
        self.faults += 1
        if kind == HARD:
            self.kill(proc)
        return kind

    def _draw(self, proc: int) -> Optional[str]:
        if self.rng.random() >= self._f:
            return None
        if self._hard and proc != self.model.exempt and self.rng.random() < self._hard:
            return HARD
        return SOFT

    def kill(self, proc: int) -> None:
        if proc == self.model.exempt:
            raise ValueError(f"processor {proc} is exempt from hard faults")
        self.live[proc] = False
