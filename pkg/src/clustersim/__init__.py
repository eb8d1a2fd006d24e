"""Discrete-event simulator for multi-cluster scratchpad manycores.

Runs double-buffered integer kernels under hard or soft phase barriers
on configurable cluster layouts, producing deterministic traces and the
derived timeline, breakdown, and drift analyses.
"""

from .barriers import (BarrierKind, BarrierProtocolError, hierarchical_reduce)
from .engine import (DeadlockError, DmaRangeError, L2Arbiter, SimulationError,
                     VersionTagError, l2_arbiter_grant, run)
from .kernels import (KERNEL_NAMES, KernelError, classify_boundedness,
                      make_kernel, oracle)
from .machine import (ConfigError, Machine, SystemConfig, l1_latency,
                      paper_configs, validate_config)
from .metrics import (activity_breakdown, compare_runs, compute_drift,
                      extract_timeline, steady_phase)
from .trace import Trace

__all__ = [
    "BarrierKind", "BarrierProtocolError", "hierarchical_reduce",
    "DeadlockError", "DmaRangeError", "L2Arbiter", "SimulationError",
    "VersionTagError", "l2_arbiter_grant", "run",
    "KERNEL_NAMES", "KernelError", "classify_boundedness", "make_kernel",
    "oracle",
    "ConfigError", "Machine", "SystemConfig", "l1_latency", "paper_configs",
    "validate_config",
    "activity_breakdown", "compare_runs", "compute_drift", "extract_timeline",
    "steady_phase",
    "Trace",
]

__version__ = "0.1.0"
