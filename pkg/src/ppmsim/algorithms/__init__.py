"""Fault-tolerant fork-join algorithms built on the capsule runtime."""

from .matmul import matmul, multiply
from .merge import merge, merge_lists
from .prefix_sum import OPS, native_prefix, prefix_sum, sum_tree_ok
from .runtime import AlgoResult, capsule_scans, pool_usage
from .sort import sort

__all__ = ["AlgoResult", "OPS", "capsule_scans", "matmul", "merge", "merge_lists", "multiply",
           "native_prefix", "pool_usage", "prefix_sum", "sort", "sum_tree_ok"]
