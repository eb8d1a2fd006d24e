"""Parameterized multi-cluster machine model.

A machine is a set of compute clusters sharing a constant-bandwidth L2
memory through a round-robin arbitrated port.  Each cluster owns a slice
of the total L1 scratchpad and a private DMA engine for L1<->L2
transfers.  Cluster granularity (how the fixed core budget is divided
into clusters) is the independent variable of every experiment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

WORD_BYTES = 4  # 32-bit integer machine

# Load-use latency of the intra-cluster L1 interconnect, keyed by cores
# per cluster.  Endpoints are fixed by the hardware template (1 cycle for
# small clusters, 5 for a 256-core cluster); intermediate sizes are a
# linear fill-in and can be overridden per config.
DEFAULT_L1_LATENCY = {
    1: 1, 2: 1, 4: 1, 8: 1, 16: 1,
    32: 2, 64: 3, 128: 4, 256: 5,
}

PAPER_TOTAL_CORES = 256


class ConfigError(ValueError):
    """Raised when a SystemConfig is internally inconsistent."""


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one machine configuration.

    Timing fields beyond the L1 latency table are calibration knobs; the
    defaults are documented model choices, not measured hardware values.
    """

    num_clusters: int
    cores_per_cluster: int
    total_l1_bytes: int = 1 << 20
    l1_latency_table: dict[int, int] = field(
        default_factory=lambda: dict(DEFAULT_L1_LATENCY))
    l2_bandwidth: int = 16          # words per cycle, shared by all clusters
    l2_latency: int = 20            # cycles, L2-side round trip
    dma_setup_cycles: int = 30      # per-descriptor engine setup
    interrupt_wakeup_cycles: int = 10
    amo_cycles: int | None = None   # None: l1 latency locally, l2 latency globally

    # DMA engine shape: one backend per `dma_backend_cores` cores, each
    # streaming bursts of `dma_burst_words` with a single outstanding
    # request.  Larger clusters therefore hide more of the L2 round trip.
    dma_backend_cores: int = 16
    dma_burst_words: int | None = None  # None: cores_per_cluster
    dma_fill_cycles: int | None = None  # None: l2_latency; per-burst dead time

    # Core cost model: loads in unrolled inner loops hide all but
    # max(0, latency - stall_hide_depth) cycles; scalar loads stall the
    # full latency - 1.
    stall_hide_depth: int = 4

    # Deterministic execution-time variance (drift source), as fractions.
    core_jitter: float = 0.12      # per (core, phase) extra lsu-stall
    cluster_jitter: float = 0.06   # per (cluster, phase), hits all cores
    dma_jitter: float = 0.06       # per (cluster, phase) transfer stretch

    poll_interval: int | None = None  # None: l2_latency (bus round trip)

    def __post_init__(self):
        if self.amo_cycles is not None and self.amo_cycles <= 0:
            raise ConfigError("amo_cycles must be positive when given")

    # -- derived quantities ------------------------------------------------

    @property
    def total_cores(self) -> int:
        return self.num_clusters * self.cores_per_cluster

    @property
    def l1_bytes_per_cluster(self) -> int:
        return self.total_l1_bytes // self.num_clusters

    @property
    def l1_words_per_cluster(self) -> int:
        return self.l1_bytes_per_cluster // WORD_BYTES

    @property
    def burst_words(self) -> int:
        return self.dma_burst_words or self.cores_per_cluster

    @property
    def fill_cycles(self) -> int:
        return self.l2_latency if self.dma_fill_cycles is None else self.dma_fill_cycles

    @property
    def poll_cycles(self) -> int:
        return self.poll_interval or self.l2_latency

    @property
    def dma_backends(self) -> int:
        return max(1, self.cores_per_cluster // self.dma_backend_cores)

    def amo_local(self) -> int:
        """Service cycles for an AMO on the cluster's own L1."""
        if self.amo_cycles is not None:
            return self.amo_cycles
        return self.l1_latency_table[self.cores_per_cluster]

    def amo_global(self) -> int:
        """Service cycles for an AMO on shared L2."""
        if self.amo_cycles is not None:
            return self.amo_cycles
        return self.l2_latency

    def label(self) -> str:
        return f"{self.num_clusters}x{self.cores_per_cluster}"

    def with_overrides(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ClusterState:
    """Identity of one cluster inside a validated machine."""

    index: int
    cores: int
    l1_words: int
    first_core: int  # global id of the cluster's first core


@dataclass(frozen=True)
class Machine:
    """A validated machine: config plus per-cluster identity.

    Construction is pure; all mutable simulation state (memories, tags,
    engine queues) lives in the engine's per-run state.
    """

    config: SystemConfig
    clusters: tuple[ClusterState, ...]

    @property
    def num_clusters(self) -> int:
        return self.config.num_clusters

    @property
    def cores_per_cluster(self) -> int:
        return self.config.cores_per_cluster

    def global_core_id(self, cluster: int, core: int) -> int:
        return self.clusters[cluster].first_core + core


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def validate_config(raw: SystemConfig) -> Machine:
    """Check a SystemConfig and build the corresponding Machine.

    Rejects structurally impossible configs; merely warns when the total
    core count differs from the 256-core replication template.
    """
    if not _is_pow2(raw.num_clusters) or not (1 <= raw.num_clusters <= 16):
        raise ConfigError(f"num_clusters must be a power of two in 1..16, got {raw.num_clusters}")
    if not _is_pow2(raw.cores_per_cluster) or raw.cores_per_cluster > 256:
        raise ConfigError(f"cores_per_cluster must be a power of two <= 256, got {raw.cores_per_cluster}")
    if raw.total_l1_bytes % raw.num_clusters != 0:
        raise ConfigError(
            f"total_l1_bytes ({raw.total_l1_bytes}) must divide evenly by {raw.num_clusters} clusters")
    if raw.cores_per_cluster not in raw.l1_latency_table:
        raise ConfigError(f"l1_latency_table has no entry for {raw.cores_per_cluster} cores")
    sizes = sorted(raw.l1_latency_table)
    lats = [raw.l1_latency_table[s] for s in sizes]
    if any(b < a for a, b in zip(lats, lats[1:])):
        raise ConfigError("l1_latency_table must be non-decreasing in cluster size")
    if raw.l2_bandwidth <= 0:
        raise ConfigError("l2_bandwidth must be positive")
    if raw.dma_backends > raw.l2_bandwidth:
        raise ConfigError(
            f"cluster DMA width ({raw.dma_backends} backends) exceeds the "
            f"L2 port width ({raw.l2_bandwidth} words/cycle)")
    if raw.total_cores != PAPER_TOTAL_CORES:
        warnings.warn(
            f"config {raw.label()} has {raw.total_cores} cores; "
            f"replication configs use {PAPER_TOTAL_CORES}",
            stacklevel=2)

    per_cluster_words = raw.l1_words_per_cluster
    clusters = tuple(
        ClusterState(
            index=i,
            cores=raw.cores_per_cluster,
            l1_words=per_cluster_words,
            first_core=i * raw.cores_per_cluster,
        )
        for i in range(raw.num_clusters)
    )
    return Machine(config=raw, clusters=clusters)


def l1_latency(config: SystemConfig, cores_in_cluster: int) -> int:
    """Round-trip load-use latency for a cluster of the given size."""
    try:
        return config.l1_latency_table[cores_in_cluster]
    except KeyError:
        raise ConfigError(f"no L1 latency entry for cluster size {cores_in_cluster}") from None


def paper_configs(**overrides) -> list[SystemConfig]:
    """The five 256-core sweep configurations."""
    shapes = [(1, 256), (2, 128), (4, 64), (8, 32), (16, 16)]
    return [SystemConfig(num_clusters=c, cores_per_cluster=m, **overrides) for c, m in shapes]
