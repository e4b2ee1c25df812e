import os

from hypothesis import HealthCheck, settings

from ppmsim.machine import Machine
from ppmsim.memory import MachineConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def boot_one(name, args=(), P=1, M=64, Mp=1024, B=1, S=8, proc=0, **kw):
    """Machine with a single closure ``name(args)`` booted on ``proc``; returns (machine, closure)."""
    m = Machine(MachineConfig(P=P, M=M, Mp=Mp, B=B, S=S), **kw)
    c = m.setup_closure(name, args)
    m.boot(proc, c)
    return m, c


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
