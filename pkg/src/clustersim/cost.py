"""Analytic cycle costs for core work and DMA transfers.

These closed forms are the single source of truth for the timing model;
the event engine uses them directly and the cycle-accurate arbiter tests
check them against step-by-step simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .machine import SystemConfig


@dataclass(frozen=True)
class OpCounts:
    """Abstract instruction mix of one work item (one core, one phase)."""

    compute: int = 0        # arithmetic ops, 1 cycle each
    ctrl: int = 0           # branches, index math, 1 cycle each
    loads_unrolled: int = 0  # loads inside unrolled inner loops
    loads_scalar: int = 0    # loads outside unrolled loops
    stores: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(
            self.compute + other.compute,
            self.ctrl + other.ctrl,
            self.loads_unrolled + other.loads_unrolled,
            self.loads_scalar + other.loads_scalar,
            self.stores + other.stores,
        )

    def scaled(self, k: int) -> "OpCounts":
        return OpCounts(
            self.compute * k, self.ctrl * k, self.loads_unrolled * k,
            self.loads_scalar * k, self.stores * k)

    @property
    def loads(self) -> int:
        return self.loads_unrolled + self.loads_scalar

    @property
    def instructions(self) -> int:
        return self.compute + self.ctrl + self.loads + self.stores


@dataclass(frozen=True)
class WorkCycles:
    """Cycle charge of a work item, split by activity category."""

    compute: int
    control: int
    lsu_stall: int

    @property
    def total(self) -> int:
        return self.compute + self.control + self.lsu_stall


def work_cycles(config: SystemConfig, l1_lat: int, ops: OpCounts) -> WorkCycles:
    """Charge a work item's instruction mix at the given L1 latency.

    Every instruction issues in one cycle; loads additionally stall for
    the part of the load-use latency the core cannot hide.
    """
    stall_u = max(0, l1_lat - config.stall_hide_depth)
    stall_s = max(0, l1_lat - 1)
    control = ops.ctrl + ops.loads + ops.stores
    lsu = ops.loads_unrolled * stall_u + ops.loads_scalar * stall_s
    return WorkCycles(compute=ops.compute, control=control, lsu_stall=lsu)


def backend_share(words: int, backends: int) -> int:
    """Words handled by the busiest DMA backend for an even stripe split."""
    return -(-words // backends)  # ceil


def transfer_cycles(config: SystemConfig, words: int) -> int:
    """Streaming duration of one descriptor, excluding engine setup.

    The cluster DMA splits the transfer across its backends; each backend
    issues bursts of `burst_words` with a single outstanding request, so
    every burst pays the L2 round trip before its beats stream at one
    word per cycle. Large clusters have more backends *and* longer
    bursts, which is what makes their transfers latency-tolerant.
    """
    if words <= 0:
        return 0
    share = backend_share(words, config.dma_backends)
    bursts = -(-share // config.burst_words)
    return bursts * config.fill_cycles + share


def transfer_total(config: SystemConfig, words: int) -> int:
    """Descriptor setup plus streaming duration (sole user, no polls)."""
    if words <= 0:
        return 0
    return config.dma_setup_cycles + transfer_cycles(config, words)


def cluster_dma_peak_rate(config: SystemConfig) -> float:
    """Upper bound on one cluster's streaming rate, words/cycle."""
    return min(float(config.l2_bandwidth), float(config.dma_backends))
