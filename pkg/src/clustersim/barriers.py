"""Barrier protocols for double-buffered phases, plus AMO reductions.

Two synchronization schemes gate the phase transitions of every cluster:

* hard: cores atomically increment the cluster barrier counter and go to
  sleep; once all cores have arrived *and* the cluster DMA has finished
  the phase's transfers, everything releases together and only then is
  the next transfer programmed.

* soft: cores increment the counter and check the count.  The first
  arriver watches for DMA completion (busy-polling the engine over the
  system bus while a transfer is still in flight) and interrupts the
  sleepers; every woken or late core proceeds straight into its next
  compute phase without waiting for the rest.  The last arriver resets
  the counter, programs the next transfer, and raises the stage guard
  that keeps anyone from running two phases ahead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .machine import SystemConfig


class BarrierKind(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class BarrierProtocolError(RuntimeError):
    """A protocol invariant was violated (double reset, counter overflow)."""


@dataclass
class BarrierState:
    """Bookkeeping for one cluster barrier instance (one phase)."""

    phase: int
    participants: int
    counter: int = 0
    reset_done: bool = False
    arrival_order: list[int] = field(default_factory=list)

    def arrive(self, core: int) -> int:
        """AMO-increment; returns the pre-increment count."""
        if self.counter >= self.participants:
            raise BarrierProtocolError(
                f"barrier counter overflow in phase {self.phase}")
        old = self.counter
        self.counter += 1
        self.arrival_order.append(core)
        return old

    def reset(self) -> None:
        if self.reset_done:
            raise BarrierProtocolError(f"double reset in phase {self.phase}")
        if self.counter != self.participants:
            raise BarrierProtocolError(
                f"reset before all arrivals in phase {self.phase}")
        self.counter = 0
        self.reset_done = True


def amo_queue(arrivals: list[int], service: int) -> list[int]:
    """Completion times of serialized AMOs on one location.

    `arrivals` are request issue times in submission order; the location
    services one request per `service` cycles.
    """
    done = []
    free = 0
    for t in arrivals:
        free = max(t, free) + service
        done.append(free)
    return done


def resolve_hard(arrival_times: list[int], dma_done: int, cfg: SystemConfig) -> int:
    """Collective release time of a hard barrier.

    All cores sleep after arriving; the release fires one interrupt
    wake-up after both the last arrival and the transfer completion.
    DMA completion reaches the barrier over the cluster-local line, so
    no bus traffic is involved.
    """
    return max(max(arrival_times), dma_done) + cfg.interrupt_wakeup_cycles


def soft_release(arrival: int, dma_done: int, poll_success: int,
                 is_poller: bool, cfg: SystemConfig) -> int:
    """Release time of one core under the soft protocol.

    Cores that find the completion flag already posted continue at their
    own arrival; the poller continues the moment its poll confirms
    completion; true sleepers pay the interrupt wake-up.
    """
    if arrival >= dma_done:
        return arrival
    if is_poller:
        return poll_success
    return poll_success + cfg.interrupt_wakeup_cycles


def hierarchical_reduce(per_core_values, num_clusters: int | None = None) -> int:
    """Sum per-core partial values the way the AMO tree does.

    `per_core_values` is a sequence of per-cluster arrays of 32-bit
    partials.  Cores first add into their cluster accumulator, then one
    representative per cluster adds into the global sum.  A single
    cluster reduces in one level straight into the global location.
    32-bit wraparound makes the result order-independent and equal to
    the plain sequential sum.
    """
    if num_clusters is not None and len(per_core_values) != num_clusters:
        raise ValueError("cluster count mismatch")

    def wrap(x: int) -> int:
        return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000

    total = 0
    for partials in per_core_values:
        cluster_acc = 0
        for v in np.asarray(partials, dtype=np.int32):
            cluster_acc = wrap(cluster_acc + int(v))
        total = wrap(total + cluster_acc)
    return total
