"""Deterministic simulator for the Parallel Persistent Memory model."""

from .capsules import NIL, Context, capsule, key_of
from .faults import HARD, SOFT, FaultEngine, FaultModel
from .machine import (Machine, MachineTimeout, RoundRobin, RunResult, Scripted,
                      SeededRandom, make_strategy)
from .memory import (AccessLog, MachineConfig, ModelViolation, OutOfMemory, SchedulerBug,
                     race_scan, war_conflict_scan)
from .metrics import CostReport, inflation_check, restart_bound, time_bound_report

__all__ = [
    "NIL", "Context", "capsule", "key_of", "HARD", "SOFT", "FaultEngine", "FaultModel",
    "Machine", "MachineTimeout", "RoundRobin", "RunResult", "Scripted", "SeededRandom",
    "make_strategy", "AccessLog", "MachineConfig", "ModelViolation", "OutOfMemory",
    "SchedulerBug", "race_scan", "war_conflict_scan", "CostReport", "inflation_check",
    "restart_bound", "time_bound_report",
]
