"""The five double-buffered integer kernels and their sequential oracles.

Each kernel fixes its problem size, splits work over clusters and cores,
declares the abstract instruction mix of one per-core work item, and
knows how to actually execute a phase over real 32-bit buffer contents
(all arithmetic wraps mod 2^32, so parallel and sequential results match
bit for bit).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import cost
from .inputs import lcg_words
from .machine import Machine, l1_latency

KERNEL_NAMES = ("dct", "matmul", "axpy", "conv2d", "dotp")

_MASK32 = np.uint64(0xFFFFFFFF)

# Paper-fixed problem sizes.
VECTOR_LEN = 49152          # axpy / dotp elements per iteration
DCT_ROWS, DCT_COLS = 96, 1024
DCT_POINTS = 64             # transform length, one batch per core pass
CONV_ROWS, CONV_COLS = 48, 1024
MATMUL_TILE = {1: 192, 2: 128, 4: 96, 8: 64, 16: 48}  # by cluster count
MATMUL_REF_DEPTH = 192      # depth of the reference full-size product

PHASE_MGMT_OPS = cost.OpCounts(ctrl=64, loads_scalar=4)


class KernelError(ValueError):
    """Raised when a kernel cannot be instantiated on a machine."""


@dataclass(frozen=True)
class WorkItem:
    """One core's share of a compute phase."""

    cluster: int
    core: int
    out_lo: int           # coverage interval in the kernel's output space
    out_hi: int
    ops: cost.OpCounts


@dataclass(frozen=True)
class DmaJob:
    """One DMA descriptor: a contiguous L1 region <-> L2 window copy."""

    direction: str        # "in" | "out"
    region: str           # L1 region name
    l1_lo: int
    l1_hi: int
    l2_lo: int
    l2_hi: int
    phase: int            # version tag carried by "in" jobs

    @property
    def words(self) -> int:
        return self.l1_hi - self.l1_lo

    def __post_init__(self):
        if self.words <= 0:
            raise KernelError("zero-length DMA descriptor")
        if self.l2_hi - self.l2_lo != self.words:
            raise KernelError("L1/L2 window size mismatch")


def _split_even(total: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous near-even split; earlier parts take the remainder."""
    base, rem = divmod(total, parts)
    spans = []
    lo = 0
    for i in range(parts):
        hi = lo + base + (1 if i < rem else 0)
        spans.append((lo, hi))
        lo = hi
    assert lo == total
    return spans


class Kernel:
    """Base class: problem sizing, partition, phase plan, execution."""

    name: str
    phase_factor = 1  # compute phases per pipeline iteration

    def __init__(self, machine: Machine, dims: dict | None = None):
        self.machine = machine
        self.config = machine.config
        self.paper_sizes = not dims
        self._setup(dims or {})
        self._check_l1_fit()
        self._work_items = self._build_partition()

    # -- per-kernel hooks ---------------------------------------------------

    def _setup(self, dims: dict) -> None:
        raise NotImplementedError

    def regions(self) -> dict[str, int]:
        """L1 region name -> words, per cluster."""
        raise NotImplementedError

    def _build_partition(self) -> dict[tuple[int, int], WorkItem]:
        raise NotImplementedError

    def coverage_size(self) -> int:
        """Size of the per-phase output index space the partition covers."""
        raise NotImplementedError

    def transfers(self, cluster: int, slot: int, n_phases: int) -> list[DmaJob]:
        """DMA jobs of pipeline slot `slot` (out before in)."""
        raise NotImplementedError

    def input_requirements(self, cluster: int, phase: int) -> list[tuple[str, int]]:
        """Regions (with required version tags) a phase reads."""
        raise NotImplementedError

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        """Execute one phase functionally on the cluster's L1 contents."""
        raise NotImplementedError

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        """Allocate and fill the L2 image for a run."""
        raise NotImplementedError

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        """Sequential oracle for the final L2 output window."""
        raise NotImplementedError

    def output_window(self) -> tuple[int, int]:
        raise NotImplementedError

    def declared_in_words(self, cluster: int) -> int:
        """Steady-slot DMA-in footprint of one cluster."""
        raise NotImplementedError

    def declared_out_words(self, cluster: int) -> int:
        raise NotImplementedError

    # -- shared behaviour ---------------------------------------------------

    @property
    def partition(self) -> dict[tuple[int, int], WorkItem]:
        return self._work_items

    def work_item(self, cluster: int, core: int) -> WorkItem:
        return self._work_items[(cluster, core)]

    def compute_phases(self, iterations: int) -> int:
        return iterations * self.phase_factor

    def final_transfers(self, cluster: int, n_phases: int) -> list[DmaJob]:
        """Drain jobs enqueued once the last compute phase has finished."""
        raise NotImplementedError

    def initial_regions(self) -> dict[str, np.ndarray]:
        """Static L1 contents preloaded before the pipeline starts."""
        return {}

    def init_run_state(self) -> None:
        """Reset any per-run kernel state (e.g. reduction partials)."""

    def output_words_per_phase(self) -> float:
        """System-wide output words produced per steady phase.

        Used as the throughput numerator; depth-normalized for matmul so
        differently tiled runs stay comparable.
        """
        raise NotImplementedError

    def _check_l1_fit(self) -> None:
        need = sum(self.regions().values())
        have = self.config.l1_words_per_cluster
        if need > have:
            raise KernelError(
                f"{self.name} needs {need} L1 words per cluster, "
                f"config {self.config.label()} provides {have}")

    def _phase_ops(self, base: cost.OpCounts) -> cost.OpCounts:
        return base + PHASE_MGMT_OPS


# ---------------------------------------------------------------------------
# axpy / dotp: streaming vector kernels
# ---------------------------------------------------------------------------


class _VectorKernel(Kernel):
    """Common partitioning for the two flat-vector kernels."""

    has_out: bool

    def _setup(self, dims: dict) -> None:
        self.n = int(dims.get("vector_len", VECTOR_LEN))
        if self.n % self.machine.num_clusters:
            raise KernelError(f"vector length {self.n} not divisible by clusters")
        self.chunk = self.n // self.machine.num_clusters

    def regions(self) -> dict[str, int]:
        r = {}
        for par in (0, 1):
            r[f"x{par}"] = self.chunk
            r[f"y{par}"] = self.chunk
        return r

    def coverage_size(self) -> int:
        return self.n

    def _core_spans(self, cluster: int) -> list[tuple[int, int]]:
        lo = cluster * self.chunk
        return [(lo + a, lo + b)
                for a, b in _split_even(self.chunk, self.machine.cores_per_cluster)]

    def _build_partition(self) -> dict[tuple[int, int], WorkItem]:
        items = {}
        for c in range(self.machine.num_clusters):
            for k, (lo, hi) in enumerate(self._core_spans(c)):
                items[(c, k)] = WorkItem(c, k, lo, hi, self._elem_ops(hi - lo))
        return items

    def _elem_ops(self, e: int) -> cost.OpCounts:
        raise NotImplementedError

    def _l2_base(self, which: str, iterations: int) -> int:
        sz = self.n * iterations
        return {"x": 0, "y": sz, "out": 2 * sz}[which]

    def _out_job(self, cluster: int, phase: int) -> DmaJob:
        chunk = self.chunk
        lo = cluster * chunk
        base = self._l2_base("out", self._iterations) + phase * self.n + lo
        return DmaJob("out", f"y{phase % 2}", 0, chunk, base, base + chunk, phase)

    def transfers(self, cluster: int, slot: int, n_phases: int) -> list[DmaJob]:
        jobs = []
        chunk = self.chunk
        lo = cluster * chunk
        out_phase = slot - 2
        # the last phase's output drains via final_transfers instead
        if self.has_out and 0 <= out_phase < n_phases - 1:
            jobs.append(self._out_job(cluster, out_phase))
        in_phase = slot
        if 0 <= in_phase < n_phases:
            par = in_phase % 2
            for name in ("x", "y"):
                base = self._l2_base(name, self._iterations) + in_phase * self.n + lo
                jobs.append(DmaJob("in", f"{name}{par}", 0, chunk, base, base + chunk, in_phase))
        return jobs

    def final_transfers(self, cluster: int, n_phases: int) -> list[DmaJob]:
        if not self.has_out or n_phases == 0:
            return []
        return [self._out_job(cluster, n_phases - 1)]

    def input_requirements(self, cluster: int, phase: int) -> list[tuple[str, int]]:
        par = phase % 2
        return [(f"x{par}", phase), (f"y{par}", phase)]

    def declared_in_words(self, cluster: int) -> int:
        return 2 * self.chunk

    def declared_out_words(self, cluster: int) -> int:
        return self.chunk if self.has_out else 0


class AxpyKernel(_VectorKernel):
    """y = alpha * x + y over 49152-element vectors per iteration."""

    name = "axpy"
    has_out = True

    def _elem_ops(self, e: int) -> cost.OpCounts:
        # unrolled-by-4 loop: lw x, lw y, mac, sw per element,
        # two pointer bumps and a branch per unrolled block
        base = cost.OpCounts(
            compute=e, loads_unrolled=2 * e, stores=e,
            ctrl=3 * (e // 4) + 24, loads_scalar=6)
        return self._phase_ops(base)

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        self._iterations = iterations
        sz = self.n * iterations
        l2 = np.zeros(3 * sz, dtype=np.int32)
        l2[0:sz] = lcg_words(seed, 1, sz)
        l2[sz:2 * sz] = lcg_words(seed, 2, sz)
        self.alpha = int(lcg_words(seed, 3, 1)[0])
        return l2

    def output_window(self) -> tuple[int, int]:
        sz = self.n * self._iterations
        return (2 * sz, 3 * sz)

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        par = phase % 2
        x = regions[f"x{par}"]
        y = regions[f"y{par}"]
        np.add(np.multiply(x, np.int32(self.alpha)), y, out=y)

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        sz = self.n * iterations
        x = lcg_words(seed, 1, sz).astype(np.uint64)
        y = lcg_words(seed, 2, sz).astype(np.uint64)
        a = np.uint64(int(lcg_words(seed, 3, 1)[0]) & 0xFFFFFFFF)
        out = ((a * (x & _MASK32) & _MASK32) + (y & _MASK32)) & _MASK32
        return out.astype(np.uint32).view(np.int32)

    def output_words_per_phase(self) -> float:
        return float(self.n)


class DotpKernel(_VectorKernel):
    """Dot product; per-core partials reduced hierarchically at the end."""

    name = "dotp"
    has_out = False

    def _elem_ops(self, e: int) -> cost.OpCounts:
        base = cost.OpCounts(
            compute=e, loads_unrolled=2 * e,
            ctrl=3 * (e // 4) + 24, loads_scalar=4)
        return self._phase_ops(base)

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        self._iterations = iterations
        sz = self.n * iterations
        l2 = np.zeros(2 * sz + 1, dtype=np.int32)
        l2[0:sz] = lcg_words(seed, 1, sz)
        l2[sz:2 * sz] = lcg_words(seed, 2, sz)
        self._out_at = 2 * sz
        return l2

    def output_window(self) -> tuple[int, int]:
        return (self._out_at, self._out_at + 1)

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        # partials accumulate core-side; engine collects them via
        # core_partial() so the hierarchical reduction stays explicit
        par = phase % 2
        x = regions[f"x{par}"]
        y = regions[f"y{par}"]
        prods = np.multiply(x, y)
        spans = _split_even(self.chunk, self.machine.cores_per_cluster)
        acc = self._partials[cluster]
        for k, (lo, hi) in enumerate(spans):
            part = np.add.reduce(prods[lo:hi], dtype=np.int32)
            np.add(acc[k:k + 1], part, out=acc[k:k + 1])

    def init_run_state(self) -> None:
        self._partials = [
            np.zeros(self.machine.cores_per_cluster, dtype=np.int32)
            for _ in range(self.machine.num_clusters)
        ]

    def core_partials(self) -> list[np.ndarray]:
        return self._partials

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        sz = self.n * iterations
        x = lcg_words(seed, 1, sz).astype(np.uint64) & _MASK32
        y = lcg_words(seed, 2, sz).astype(np.uint64) & _MASK32
        total = np.uint64(0)
        for lo in range(0, sz, 4096):
            hi = min(lo + 4096, sz)
            prods = (x[lo:hi] * y[lo:hi]) & _MASK32
            total = (total + np.add.reduce(prods)) & _MASK32
        return np.array([total], dtype=np.uint64).astype(np.uint32).view(np.int32)

    def output_words_per_phase(self) -> float:
        # one scalar per run; use consumed elements as the work proxy
        return float(self.n)


# ---------------------------------------------------------------------------
# dct: 64-point transform batches, in-place frames
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def dct_table(points: int = DCT_POINTS, scale_bits: int = 13) -> np.ndarray:
    """Integer DCT-II coefficient table, exactly rounded via mpmath."""
    with mpmath.workdps(30):
        pi = mpmath.pi
        tbl = np.empty((points, points), dtype=np.int32)
        scale = 1 << scale_bits
        for k in range(points):
            for n in range(points):
                c = mpmath.cos(pi * (2 * n + 1) * k / (2 * points))
                tbl[k, n] = int(mpmath.nint(c * scale))
    return tbl


class DctKernel(Kernel):
    """Blockwise 64-point DCT over a 96x1024 frame per iteration.

    The coefficient table is resident in each cluster's L1 (not double
    buffered); input batches are overwritten by their transforms.
    """

    name = "dct"

    def _setup(self, dims: dict) -> None:
        self.rows = int(dims.get("rows", DCT_ROWS))
        self.cols = int(dims.get("cols", DCT_COLS))
        self.points = DCT_POINTS
        total = self.rows * self.cols
        if total % (self.points * self.machine.num_clusters):
            raise KernelError("frame does not split into 64-point batches per cluster")
        self.frame = total
        self.slice_words = total // self.machine.num_clusters
        self.table = dct_table(self.points)

    def regions(self) -> dict[str, int]:
        return {"d0": self.slice_words, "d1": self.slice_words,
                "table": self.points * self.points}

    def coverage_size(self) -> int:
        return self.frame

    def _build_partition(self) -> dict[tuple[int, int], WorkItem]:
        items = {}
        blocks_per_cluster = self.slice_words // self.points
        for c in range(self.machine.num_clusters):
            base = c * self.slice_words
            spans = _split_even(blocks_per_cluster, self.machine.cores_per_cluster)
            for k, (blo, bhi) in enumerate(spans):
                nblocks = bhi - blo
                items[(c, k)] = WorkItem(
                    c, k,
                    base + blo * self.points, base + bhi * self.points,
                    self._block_ops(nblocks))
        return items

    def _block_ops(self, nblocks: int) -> cost.OpCounts:
        # direct 64-point transform: one table load and one MAC per
        # coefficient, unrolled by 4 on the inner accumulation
        p = self.points
        per_block = cost.OpCounts(
            compute=p * p + p,
            loads_unrolled=p * p + p,
            stores=p,
            ctrl=3 * ((p * p) // 4) + 2 * p + 30)
        return self._phase_ops(per_block.scaled(nblocks))

    def _out_job(self, cluster: int, phase: int) -> DmaJob:
        sw = self.slice_words
        lo = cluster * sw
        base = self._out_base + phase * self.frame + lo
        return DmaJob("out", f"d{phase % 2}", 0, sw, base, base + sw, phase)

    def transfers(self, cluster: int, slot: int, n_phases: int) -> list[DmaJob]:
        jobs = []
        sw = self.slice_words
        lo = cluster * sw
        out_phase = slot - 2
        if 0 <= out_phase < n_phases - 1:
            jobs.append(self._out_job(cluster, out_phase))
        if 0 <= slot < n_phases:
            par = slot % 2
            base = slot * self.frame + lo
            jobs.append(DmaJob("in", f"d{par}", 0, sw, base, base + sw, slot))
        return jobs

    def final_transfers(self, cluster: int, n_phases: int) -> list[DmaJob]:
        if n_phases == 0:
            return []
        return [self._out_job(cluster, n_phases - 1)]

    def input_requirements(self, cluster: int, phase: int) -> list[tuple[str, int]]:
        return [(f"d{phase % 2}", phase)]

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        d = regions[f"d{phase % 2}"]
        blocks = d.reshape(-1, self.points)
        table = regions["table"].reshape(self.points, self.points)
        blocks[:] = np.matmul(blocks, table.T)

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        self._iterations = iterations
        sz = self.frame * iterations
        self._out_base = sz
        l2 = np.zeros(2 * sz, dtype=np.int32)
        l2[0:sz] = lcg_words(seed, 1, sz)
        return l2

    def output_window(self) -> tuple[int, int]:
        sz = self.frame * self._iterations
        return (sz, 2 * sz)

    def initial_regions(self) -> dict[str, np.ndarray]:
        return {"table": self.table.reshape(-1).copy()}

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        sz = self.frame * iterations
        x = lcg_words(seed, 1, sz).astype(np.int64).reshape(-1, self.points)
        t = self.table.astype(np.int64)
        out = np.einsum("bn,kn->bk", x, t)  # |sum| < 2^50, no wrap needed
        return (out.reshape(-1).astype(np.uint64) & _MASK32).astype(np.uint32).view(np.int32)

    def declared_in_words(self, cluster: int) -> int:
        return self.slice_words

    def declared_out_words(self, cluster: int) -> int:
        return self.slice_words

    def output_words_per_phase(self) -> float:
        return float(self.frame)


# ---------------------------------------------------------------------------
# conv2d: 3x3 stencil, output stationary, halo columns
# ---------------------------------------------------------------------------


class Conv2dKernel(Kernel):
    """3x3 convolution over a 48x1024 image per iteration.

    Clusters take contiguous column bands (one halo column per interior
    side); frame borders are zero. Each core owns a run of output rows
    within the band.
    """

    name = "conv2d"

    def _setup(self, dims: dict) -> None:
        self.rows = int(dims.get("rows", CONV_ROWS))
        self.cols = int(dims.get("cols", CONV_COLS))
        if self.cols % self.machine.num_clusters:
            raise KernelError("image columns not divisible by clusters")
        self.band = self.cols // self.machine.num_clusters
        self.frame = self.rows * self.cols
        self.kernel3 = lcg_words(0xC0FFEE, 7, 9).reshape(3, 3)

    def regions(self) -> dict[str, int]:
        with_halo = self.rows * (self.band + 2)
        return {"in0": with_halo, "in1": with_halo,
                "out0": self.rows * self.band, "out1": self.rows * self.band}

    def coverage_size(self) -> int:
        return self.frame

    def _band_cols(self, cluster: int) -> tuple[int, int]:
        return cluster * self.band, (cluster + 1) * self.band

    def _halo_cols(self, cluster: int) -> tuple[int, int]:
        lo, hi = self._band_cols(cluster)
        return max(0, lo - 1), min(self.cols, hi + 1)

    def _build_partition(self) -> dict[tuple[int, int], WorkItem]:
        items = {}
        outs_per_cluster = self.rows * self.band
        for c in range(self.machine.num_clusters):
            base = c * outs_per_cluster
            spans = _split_even(outs_per_cluster, self.machine.cores_per_cluster)
            for k, (lo, hi) in enumerate(spans):
                # column-major band: each column strip restarts the row loop
                segs = (hi - 1) // self.rows - lo // self.rows + 1 if hi > lo else 0
                items[(c, k)] = WorkItem(
                    c, k, base + lo, base + hi,
                    self._out_ops(hi - lo, segs))
        return items

    def _out_ops(self, outs: int, segs: int) -> cost.OpCounts:
        base = cost.OpCounts(
            compute=9 * outs,
            loads_unrolled=9 * outs,
            stores=outs,
            ctrl=3 * outs + 10 * segs + 30,
            loads_scalar=8)
        return self._phase_ops(base)

    def _out_job(self, cluster: int, phase: int) -> DmaJob:
        band_words = self.rows * self.band
        lo, _ = self._band_cols(cluster)
        base = self._out_base + phase * self.frame + lo * self.rows
        return DmaJob("out", f"out{phase % 2}", 0, band_words,
                      base, base + band_words, phase)

    def transfers(self, cluster: int, slot: int, n_phases: int) -> list[DmaJob]:
        # frames are stored column-major so a column band is contiguous
        jobs = []
        out_phase = slot - 2
        if 0 <= out_phase < n_phases - 1:
            jobs.append(self._out_job(cluster, out_phase))
        if 0 <= slot < n_phases:
            par = slot % 2
            hlo, hhi = self._halo_cols(cluster)
            words = self.rows * (hhi - hlo)
            base = slot * self.frame + hlo * self.rows
            jobs.append(DmaJob("in", f"in{par}", 0, words, base, base + words, slot))
        return jobs

    def final_transfers(self, cluster: int, n_phases: int) -> list[DmaJob]:
        if n_phases == 0:
            return []
        return [self._out_job(cluster, n_phases - 1)]

    def input_requirements(self, cluster: int, phase: int) -> list[tuple[str, int]]:
        return [(f"in{phase % 2}", phase)]

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        par = phase % 2
        hlo, hhi = self._halo_cols(cluster)
        blo, _ = self._band_cols(cluster)
        ncols = hhi - hlo
        src = regions[f"in{par}"][: self.rows * ncols].reshape(ncols, self.rows)
        # padded column p holds frame column blo - 1 + p; frame borders stay 0
        padded = np.zeros((self.band + 2, self.rows + 2), dtype=np.int32)
        first = hlo - (blo - 1)
        padded[first:first + ncols, 1:-1] = src
        out = np.zeros((self.band, self.rows), dtype=np.int32)
        k = self.kernel3
        for dc in range(3):
            for dr in range(3):
                contrib = np.multiply(padded[dc:dc + self.band, dr:dr + self.rows],
                                      k[dc, dr])
                np.add(out, contrib, out=out)
        regions[f"out{par}"][:] = out.reshape(-1)

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        self._iterations = iterations
        sz = self.frame * iterations
        self._out_base = sz
        l2 = np.zeros(2 * sz, dtype=np.int32)
        l2[0:sz] = lcg_words(seed, 1, sz)
        return l2

    def output_window(self) -> tuple[int, int]:
        sz = self.frame * self._iterations
        return (sz, 2 * sz)

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        sz = self.frame * iterations
        x = lcg_words(seed, 1, sz)
        out = np.empty(sz, dtype=np.int32)
        k = self.kernel3.astype(np.uint64) & _MASK32
        for it in range(iterations):
            frame = x[it * self.frame:(it + 1) * self.frame]
            img = frame.reshape(self.cols, self.rows).astype(np.uint64) & _MASK32
            padded = np.zeros((self.cols + 2, self.rows + 2), dtype=np.uint64)
            padded[1:-1, 1:-1] = img
            acc = np.zeros((self.cols, self.rows), dtype=np.uint64)
            for dc in range(3):
                for dr in range(3):
                    acc = (acc + k[dc, dr] * padded[dc:dc + self.cols, dr:dr + self.rows]) & _MASK32
            out[it * self.frame:(it + 1) * self.frame] = (
                acc.reshape(-1).astype(np.uint32).view(np.int32))
        return out

    def declared_in_words(self, cluster: int) -> int:
        hlo, hhi = self._halo_cols(cluster)
        return self.rows * (hhi - hlo)

    def declared_out_words(self, cluster: int) -> int:
        return self.rows * self.band

    def output_words_per_phase(self) -> float:
        return float(self.frame)


# ---------------------------------------------------------------------------
# matmul: per-cluster square tiles, panel double buffering, resident C
# ---------------------------------------------------------------------------


class MatmulKernel(Kernel):
    """Square-tile matrix multiply sized to fit 6 buffers in cluster L1.

    Each phase streams fresh A/B panels and accumulates into a resident
    C tile; after `phase_factor` phases (the k-depth steps of one
    product) that C tile is complete and drains through the spare C
    buffer while the next product accumulates.
    """

    name = "matmul"

    def _setup(self, dims: dict) -> None:
        default_n = MATMUL_TILE.get(self.machine.num_clusters)
        self.n = int(dims.get("tile", default_n or 0))
        if self.n <= 0 or self.n % 4:
            raise KernelError(f"no valid matmul tile for {self.config.label()}")
        self.phase_factor = -(-MATMUL_REF_DEPTH // self.n)  # k-depth steps

    def regions(self) -> dict[str, int]:
        n2 = self.n * self.n
        return {name: n2 for name in ("a0", "a1", "b0", "b1", "c0", "c1")}

    def coverage_size(self) -> int:
        # 2x2 output register tiles, all clusters
        return self.machine.num_clusters * (self.n // 2) ** 2

    def _build_partition(self) -> dict[tuple[int, int], WorkItem]:
        items = {}
        tiles = (self.n // 2) ** 2
        for c in range(self.machine.num_clusters):
            base = c * tiles
            spans = _split_even(tiles, self.machine.cores_per_cluster)
            for k, (lo, hi) in enumerate(spans):
                items[(c, k)] = WorkItem(c, k, base + lo, base + hi,
                                         self._tile_ops(hi - lo))
        return items

    def _tile_ops(self, tiles: int) -> cost.OpCounts:
        # per 2x2 tile: k-loop unrolled by 4; 16 MACs + 16 operand loads
        # + 3 control per step, 4 stores and setup per tile
        n = self.n
        per_tile = cost.OpCounts(
            compute=4 * n,
            loads_unrolled=4 * n,
            stores=4,
            ctrl=3 * (n // 4) + 24)
        base = per_tile.scaled(tiles) + cost.OpCounts(loads_scalar=10)
        return self._phase_ops(base)

    def _drain_spans(self) -> list[tuple[int, int]]:
        """C-tile drain split across the following product's phases."""
        return _split_even(self.n * self.n, self.phase_factor)

    def transfers(self, cluster: int, slot: int, n_phases: int) -> list[DmaJob]:
        jobs = []
        n2 = self.n * self.n
        g = self.phase_factor
        it = self._iterations
        # drain: product j completes at the end of slot (j+1)*g; its
        # chunks ride slots (j+1)*g + 1 .. (j+2)*g.  The final product
        # cannot amortize (no following product) and drains whole via
        # final_transfers.
        drain_slot = slot - 1
        if drain_slot >= g:
            j, step = divmod(drain_slot - g, g)
            if (j + 2) * g <= n_phases:
                dlo, dhi = self._drain_spans()[step]
                par = j % 2
                base = self._c_base + (cluster * it + j) * n2
                jobs.append(DmaJob("out", f"c{par}", dlo, dhi,
                                   base + dlo, base + dhi, j))
        if 0 <= slot < n_phases:
            par = slot % 2
            for name, rbase in (("a", self._a_base), ("b", self._b_base)):
                base = rbase + (cluster * n_phases + slot) * n2
                jobs.append(DmaJob("in", f"{name}{par}", 0, n2, base, base + n2, slot))
        return jobs

    def final_transfers(self, cluster: int, n_phases: int) -> list[DmaJob]:
        if n_phases == 0:
            return []
        n2 = self.n * self.n
        it = self._iterations
        j = it - 1
        base = self._c_base + (cluster * it + j) * n2
        return [DmaJob("out", f"c{j % 2}", 0, n2, base, base + n2, j)]

    def input_requirements(self, cluster: int, phase: int) -> list[tuple[str, int]]:
        par = phase % 2
        return [(f"a{par}", phase), (f"b{par}", phase)]

    def apply_phase(self, cluster: int, phase: int, regions: dict[str, np.ndarray]) -> None:
        n = self.n
        par = phase % 2
        product = phase // self.phase_factor
        a = regions[f"a{par}"].reshape(n, n)
        b = regions[f"b{par}"].reshape(n, n)
        c = regions[f"c{product % 2}"].reshape(n, n)
        if phase % self.phase_factor == 0:
            np.matmul(a, b, out=c)
        else:
            np.add(c, np.matmul(a, b), out=c)

    def init_l2(self, seed: int, iterations: int) -> np.ndarray:
        self._iterations = iterations
        n2 = self.n * self.n
        phases = self.compute_phases(iterations)
        nc = self.machine.num_clusters
        panel_words = nc * phases * n2
        self._a_base = 0
        self._b_base = panel_words
        self._c_base = 2 * panel_words
        l2 = np.zeros(2 * panel_words + nc * iterations * n2, dtype=np.int32)
        l2[self._a_base:self._a_base + panel_words] = lcg_words(seed, 1, panel_words)
        l2[self._b_base:self._b_base + panel_words] = lcg_words(seed, 2, panel_words)
        return l2

    def output_window(self) -> tuple[int, int]:
        n2 = self.n * self.n
        sz = self.machine.num_clusters * self._iterations * n2
        return (self._c_base, self._c_base + sz)

    def expected_output(self, seed: int, iterations: int) -> np.ndarray:
        n = self.n
        n2 = n * n
        phases = self.compute_phases(iterations)
        nc = self.machine.num_clusters
        panel_words = nc * phases * n2
        a_all = lcg_words(seed, 1, panel_words)
        b_all = lcg_words(seed, 2, panel_words)
        out = np.empty(nc * iterations * n2, dtype=np.int32)
        g = self.phase_factor
        for c in range(nc):
            for j in range(iterations):
                acc = np.zeros((n, n), dtype=np.uint64)
                for step in range(g):
                    p = j * g + step
                    off = (c * phases + p) * n2
                    a = a_all[off:off + n2].astype(np.uint64).reshape(n, n) & _MASK32
                    b = b_all[off:off + n2].astype(np.uint64).reshape(n, n) & _MASK32
                    acc = (acc + np.matmul(a, b)) & _MASK32  # uint64 wrap is mod-2^64; & reduces
                dst = (c * iterations + j) * n2
                out[dst:dst + n2] = acc.reshape(-1).astype(np.uint32).view(np.int32)
        return out

    def declared_in_words(self, cluster: int) -> int:
        return 2 * self.n * self.n

    def declared_out_words(self, cluster: int) -> int:
        # amortized: one n^2 tile per phase_factor slots
        return self.n * self.n // self.phase_factor

    def output_words_per_phase(self) -> float:
        # depth-normalized: MACs per phase divided by the reference depth,
        # so differently tiled products compare at equal arithmetic
        macs = self.machine.num_clusters * self.n ** 3
        return macs / float(MATMUL_REF_DEPTH)


# ---------------------------------------------------------------------------


_KERNELS = {
    "axpy": AxpyKernel,
    "dotp": DotpKernel,
    "dct": DctKernel,
    "conv2d": Conv2dKernel,
    "matmul": MatmulKernel,
}


def make_kernel(name: str, machine: Machine, dims: dict | None = None) -> Kernel:
    """Instantiate a kernel with paper problem sizes on a machine."""
    try:
        cls = _KERNELS[name]
    except KeyError:
        raise KernelError(f"unknown kernel {name!r}; expected one of {sorted(_KERNELS)}") from None
    return cls(machine, dims)


def oracle(kernel: Kernel, seed: int, iterations: int) -> np.ndarray:
    """Sequential reference output for a run of `iterations` pipelines."""
    return kernel.expected_output(seed, iterations)


def classify_boundedness(kernel: Kernel, machine: Machine) -> str:
    """Compare steady-phase compute vs transfer cycles for one cluster."""
    cfg = machine.config
    lat = l1_latency(cfg, cfg.cores_per_cluster)
    compute = max(
        cost.work_cycles(cfg, lat, kernel.work_item(0, k).ops).total
        for k in range(cfg.cores_per_cluster)
    )
    in_w = kernel.declared_in_words(0)
    out_w = kernel.declared_out_words(0)
    transfer = 0
    for words in (out_w, in_w):
        if words > 0:
            transfer += cost.transfer_total(cfg, words)
    return "compute-bound" if compute >= transfer else "memory-bound"
