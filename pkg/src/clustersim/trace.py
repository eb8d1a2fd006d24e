"""Immutable run traces: activity intervals, protocol events, export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

# Fixed ranks give equal-time events a total order (DMA before cores).
_DOMAIN_RANK = {"dma": 0, "core": 1}
_KIND_RANK = {
    "dma-start": 0, "dma-complete": 1,
    "start-compute": 2, "finish-compute": 3,
    "barrier-arrive": 4, "interrupt-deliver": 5, "barrier-release": 6,
}

CORE_ACTIVITY = ("compute", "control", "lsu-stall", "sync-idle")


@dataclass(frozen=True)
class Interval:
    domain: str     # "core" | "dma"
    cluster: int
    actor: int      # core index within cluster; 0 for the cluster DMA
    kind: str       # core activity category or "dma-in"/"dma-out"
    start: int
    end: int
    phase: int      # pipeline slot index

    def as_record(self) -> dict:
        return {
            "actor": f"{self.domain}{self.cluster}.{self.actor}",
            "cluster": self.cluster,
            "kind": self.kind,
            "start": self.start,
            "end": self.end,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class Event:
    time: int
    domain: str
    cluster: int
    actor: int
    kind: str
    phase: int

    def sort_key(self) -> tuple:
        return (self.time, _DOMAIN_RANK[self.domain], self.cluster,
                self.actor, _KIND_RANK[self.kind])


@dataclass
class Trace:
    """Deterministic record of one simulation run."""

    meta: dict
    intervals: list[Interval] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    total_cycles: int = 0
    n_phases: int = 0
    n_slots: int = 0
    # per (cluster, slot): words actually moved by direction
    dma_moved: dict = field(default_factory=dict)

    def finalize(self) -> "Trace":
        self.events.sort(key=Event.sort_key)
        self.intervals.sort(
            key=lambda iv: (iv.start, _DOMAIN_RANK[iv.domain], iv.cluster,
                            iv.actor, iv.end, iv.kind))
        return self

    def core_intervals(self, cluster: int | None = None) -> list[Interval]:
        return [iv for iv in self.intervals
                if iv.domain == "core" and (cluster is None or iv.cluster == cluster)]

    def dma_intervals(self, cluster: int | None = None) -> list[Interval]:
        return [iv for iv in self.intervals
                if iv.domain == "dma" and (cluster is None or iv.cluster == cluster)]

    def to_jsonl(self, path) -> None:
        """Write one JSON record per interval, meta record first."""
        with open(path, "w") as fh:
            meta = dict(self.meta)
            meta["record"] = "meta"
            meta["total_cycles"] = self.total_cycles
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for iv in self.intervals:
                fh.write(json.dumps(iv.as_record(), sort_keys=True) + "\n")
