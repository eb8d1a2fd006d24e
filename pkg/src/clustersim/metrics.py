"""Trace analysis: timelines, steady-phase aggregates, breakdowns, drift."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .trace import CORE_ACTIVITY, Trace

_BUSY = ("compute", "control", "lsu-stall")


class TraceFormatError(ValueError):
    """The trace is structurally malformed (overlapping actor intervals)."""


@dataclass
class PhaseReport:
    """Per-cluster view of one compute phase."""

    cluster: int
    phase: int
    first_start: int        # earliest core becomes active
    all_active: int         # latest core becomes active (trapezoid knee)
    last_end: int           # latest core finishes
    dma_kind: str           # "in" | "in-out" | "out" | "none"
    dma_start: int
    dma_end: int
    breakdown: dict = field(default_factory=dict)
    instructions: int = 0

    @property
    def ipc(self) -> float:
        denom = sum(self.breakdown.values())
        return self.instructions / denom if denom else 0.0

    @property
    def utilization(self) -> float:
        denom = sum(self.breakdown.values())
        return self.breakdown.get("compute", 0) / denom if denom else 0.0


@dataclass
class SteadyReport:
    """Aggregate over the steady middle phases (first and last excluded)."""

    phases: list
    window_start: int
    window_end: int
    output_words: float
    breakdown: dict
    instructions: int

    @property
    def duration(self) -> int:
        return self.window_end - self.window_start

    @property
    def throughput(self) -> float:
        return self.output_words / self.duration if self.duration else 0.0

    @property
    def ipc(self) -> float:
        denom = sum(self.breakdown.values())
        return self.instructions / denom if denom else 0.0

    @property
    def utilization(self) -> float:
        denom = sum(self.breakdown.values())
        return self.breakdown.get("compute", 0) / denom if denom else 0.0


@dataclass
class DriftReport:
    """Spread of per-cluster phase completion times over the pipeline."""

    per_phase: list[int]
    runtime: int
    final_gap: int

    @property
    def cumulative(self) -> int:
        return sum(self.per_phase)

    @property
    def cumulative_pct(self) -> float:
        return 100.0 * self.cumulative / self.runtime if self.runtime else 0.0

    @property
    def final_gap_pct(self) -> float:
        return 100.0 * self.final_gap / self.runtime if self.runtime else 0.0


def _check_no_overlap(trace: Trace) -> None:
    by_actor = defaultdict(list)
    for iv in trace.intervals:
        by_actor[(iv.domain, iv.cluster, iv.actor)].append((iv.start, iv.end))
    for key, spans in by_actor.items():
        spans.sort()
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise TraceFormatError(
                    f"overlapping intervals for actor {key}: "
                    f"[{s0},{e0}) and [{s1},..)")


def _instr_per_phase(trace: Trace, cluster: int) -> int:
    per_cluster = trace.meta.get("instr_per_phase", {})
    return int(per_cluster.get(str(cluster), 0))


def extract_timeline(trace: Trace) -> list[PhaseReport]:
    """One PhaseReport per compute phase per cluster.

    The trapezoid tracks the first core's start, the point where all
    cores are active, and the last core's end; the cluster's DMA
    activity inside the same pipeline slot is classified in/in-out/out.
    """
    _check_no_overlap(trace)
    starts: dict = {}
    ends: dict = {}
    breakdown: dict = defaultdict(lambda: defaultdict(int))
    for iv in trace.intervals:
        if iv.domain != "core":
            continue
        if iv.kind in _BUSY:
            key = (iv.cluster, iv.phase, iv.actor)
            starts[key] = min(starts.get(key, iv.start), iv.start)
            ends[key] = max(ends.get(key, iv.end), iv.end)
        breakdown[(iv.cluster, iv.phase)][iv.kind] += iv.end - iv.start

    dma: dict = defaultdict(list)
    for iv in trace.intervals:
        if iv.domain == "dma":
            # dma slot s overlaps compute phase s-1
            dma[(iv.cluster, iv.phase - 1)].append(iv)

    reports = []
    for cluster in range(int(trace.meta.get("clusters", 0)) or
                         (max((c for c, _, _ in starts), default=-1) + 1)):
        for phase in range(trace.n_phases):
            core_starts = [v for (c, p, _), v in starts.items()
                           if c == cluster and p == phase]
            core_ends = [v for (c, p, _), v in ends.items()
                         if c == cluster and p == phase]
            if not core_starts:
                continue
            jobs = dma.get((cluster, phase), [])
            kinds = {iv.kind for iv in jobs}
            if kinds == {"dma-in"}:
                dk = "in"
            elif kinds == {"dma-out"}:
                dk = "out"
            elif kinds:
                dk = "in-out"
            else:
                dk = "none"
            reports.append(PhaseReport(
                cluster=cluster, phase=phase,
                first_start=min(core_starts),
                all_active=max(core_starts),
                last_end=max(core_ends),
                dma_kind=dk,
                dma_start=min((iv.start for iv in jobs), default=0),
                dma_end=max((iv.end for iv in jobs), default=0),
                breakdown=dict(breakdown.get((cluster, phase), {})),
                instructions=_instr_per_phase(trace, cluster),
            ))
    return reports


def steady_phases(n_phases: int) -> range:
    """Indices of the steady middle phases (all but the first and last)."""
    return range(1, n_phases - 1)


def steady_phase(trace: Trace, timeline: list[PhaseReport] | None = None) -> SteadyReport:
    """Aggregate the steady middle phases of a run.

    The first compute phase overlaps only the warm-up fill and the last
    only the drain; the middle phases carry simultaneous transfer and
    compute and dominate long pipelines.
    """
    n = trace.n_phases
    if n < 4:
        raise ValueError(f"need at least 4 phases for a steady aggregate, got {n}")
    phases = list(steady_phases(n))
    timeline = timeline if timeline is not None else extract_timeline(trace)
    chosen = [r for r in timeline if r.phase in set(phases)]
    window_start = min(r.first_start for r in chosen)
    window_end = max(r.last_end for r in chosen)
    bd: dict = defaultdict(int)
    instr = 0
    for r in chosen:
        for k, v in r.breakdown.items():
            bd[k] += v
        instr += r.instructions
    words = float(trace.meta.get("output_words_per_phase", 0.0)) * len(phases)
    return SteadyReport(phases=phases, window_start=window_start,
                        window_end=window_end, output_words=words,
                        breakdown=dict(bd), instructions=instr)


def compute_drift(trace: Trace, timeline: list[PhaseReport] | None = None) -> DriftReport:
    """Per-phase spread of cluster completion times, and its total.

    Drift for a phase is the gap between the earliest and the latest
    cluster to finish it; the cumulative series sums the per-phase gaps
    and is reported relative to total runtime.  A single cluster has
    zero drift by definition.
    """
    timeline = timeline if timeline is not None else extract_timeline(trace)
    ends: dict = defaultdict(list)
    for r in timeline:
        ends[r.phase].append(r.last_end)
    per_phase = []
    for phase in sorted(ends):
        es = ends[phase]
        per_phase.append(max(es) - min(es))
    final_gap = per_phase[-1] if per_phase else 0
    return DriftReport(per_phase=per_phase, runtime=trace.total_cycles,
                       final_gap=final_gap)


def activity_breakdown(trace: Trace) -> dict:
    """Run-level activity totals: the four categories, IPC, utilization.

    Categories are exhaustive and disjoint over every core's timeline,
    so they sum exactly to cores x runtime.
    """
    totals = {k: 0 for k in CORE_ACTIVITY}
    instructions = 0
    cores = set()
    for iv in trace.intervals:
        if iv.domain == "core":
            totals[iv.kind] += iv.end - iv.start
            cores.add((iv.cluster, iv.actor))
    for cluster_totals in trace.meta.get("breakdown", {}).values():
        for per_core in cluster_totals.values():
            instructions += per_core.get("instructions", 0)
    wall = sum(totals.values())
    return {
        "categories": totals,
        "cores": len(cores),
        "instructions": instructions,
        "ipc": instructions / wall if wall else 0.0,
        "utilization": totals["compute"] / wall if wall else 0.0,
    }


@dataclass
class RelPerf:
    throughput_ratio: float
    runtime_ratio: float


def compare_runs(baseline: Trace, other: Trace) -> RelPerf:
    """Relative performance of `other` against `baseline`.

    Steady-phase throughput (output words per cycle, depth-normalized
    for matmul) plus the total-runtime speedup.  Requires both runs to
    execute the same kernel.
    """
    if baseline.meta.get("kernel") != other.meta.get("kernel"):
        raise ValueError("compare_runs requires the same kernel on both traces")
    sa = steady_phase(baseline)
    sb = steady_phase(other)
    return RelPerf(
        throughput_ratio=sb.throughput / sa.throughput,
        runtime_ratio=baseline.total_cycles / other.total_cycles,
    )
