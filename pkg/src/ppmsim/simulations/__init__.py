"""Black-box simulations that turn sequential programs into WAR-free capsules."""

from .common import SimResult
from .em import EmProgram, run_native_em, simulate_em
from .ideal_cache import IcProgram, run_native_ic, simulate_ideal_cache
from .ram import RamError, RamProgram, parse_ram, run_native_ram, simulate_ram

__all__ = ["SimResult", "EmProgram", "run_native_em", "simulate_em", "IcProgram",
           "run_native_ic", "simulate_ideal_cache", "RamError", "RamProgram", "parse_ram",
           "run_native_ram", "simulate_ram"]
