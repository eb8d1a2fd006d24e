"""Experiment driver: config parsing, sweeps, report bundles.

A sweep config is a flat INI file with [machine], [sweep], [kernels] and
[output] sections; every omitted key falls back to a documented default
and the provenance of each value is recorded in the bundle metadata.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import configparser
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from .engine import Engine, SimulationError
from .kernels import KERNEL_NAMES, classify_boundedness, make_kernel, oracle
from .machine import ConfigError, SystemConfig, validate_config

PAPER_SHAPES = ((1, 256), (2, 128), (4, 64), (8, 32), (16, 16))
PAPER_SEEDS = (1,)
ACCEPTANCE_SEEDS = (1, 2, 3)

_MACHINE_KEYS = {
    "total_l1_bytes": int, "l2_bandwidth": int, "l2_latency": int,
    "dma_setup_cycles": int, "interrupt_wakeup_cycles": int,
    "amo_cycles": int, "dma_backend_cores": int, "dma_burst_words": int,
    "dma_fill_cycles": int, "stall_hide_depth": int,
    "core_jitter": float, "cluster_jitter": float, "dma_jitter": float,
    "poll_interval": int,
}


class SweepConfigError(ValueError):
    """Config file fails schema validation."""


@dataclass
class SweepSpec:
    configs: list[SystemConfig]
    kernels: list[str]
    barriers: list[str]
    iterations: int
    seeds: list[int]
    out_dir: str
    trace_format: str = "jsonl"
    allow_uneven: bool = False
    provenance: dict = field(default_factory=dict)

    def points(self):
        for cfg in self.configs:
            for kernel in self.kernels:
                for barrier in self.barriers:
                    for seed in self.seeds:
                        yield (cfg, kernel, barrier, seed)

    def validate(self) -> None:
        if not (self.configs and self.kernels and self.barriers and self.seeds):
            raise SweepConfigError("sweep cross-product is empty")
        for k in self.kernels:
            if k not in KERNEL_NAMES:
                raise SweepConfigError(f"unknown kernel {k!r} in [kernels] names")
        for b in self.barriers:
            if b not in ("hard", "soft"):
                raise SweepConfigError(f"unknown barrier {b!r} in [sweep] barriers")
        if self.iterations < 0:
            raise SweepConfigError("[sweep] iterations must be >= 0")
        totals = {c.total_cores for c in self.configs}
        if len(totals) > 1 and not self.allow_uneven:
            raise SweepConfigError(
                f"configs have different total core counts {sorted(totals)}; "
                "pass --allow-uneven to permit this")
        for c in self.configs:
            validate_config(c)


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        c, m = text.lower().split("x")
        return int(c), int(m)
    except ValueError:
        raise SweepConfigError(
            f"bad config shape {text!r}: expected CLUSTERSxCORES like 4x64") from None


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def paper_sweep(out_dir: str = "out") -> SweepSpec:
    """The five-config, five-kernel, two-barrier replication sweep."""
    spec = SweepSpec(
        configs=[SystemConfig(num_clusters=c, cores_per_cluster=m)
                 for c, m in PAPER_SHAPES],
        kernels=list(KERNEL_NAMES),
        barriers=["hard", "soft"],
        iterations=8,
        seeds=list(PAPER_SEEDS),
        out_dir=out_dir,
    )
    spec.provenance = {"*": "paper preset"}
    return spec


def parse_config(path: str) -> SweepSpec:
    """Read and validate a sweep config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except FileNotFoundError:
        raise SweepConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise SweepConfigError(f"config parse error: {exc}") from None

    prov: dict[str, str] = {}

    def get(section, key, default, conv=str):
        if parser.has_option(section, key):
            prov[f"{section}.{key}"] = f"{path}"
            raw = parser.get(section, key)
            try:
                return conv(raw)
            except ValueError:
                raise SweepConfigError(
                    f"[{section}] {key}: cannot parse {raw!r}") from None
        prov[f"{section}.{key}"] = f"default ({default!r})"
        return default

    machine_kwargs = {}
    if parser.has_section("machine"):
        for key in parser.options("machine"):
            if key not in _MACHINE_KEYS:
                raise SweepConfigError(f"[machine] unknown key {key!r}")
            machine_kwargs[key] = _MACHINE_KEYS[key](parser.get("machine", key))
            prov[f"machine.{key}"] = path

    shapes = get("sweep", "configs", "1x256, 2x128, 4x64, 8x32, 16x16")
    configs = []
    for text in _split_list(shapes):
        c, m = _parse_shape(text)
        try:
            configs.append(SystemConfig(num_clusters=c, cores_per_cluster=m,
                                        **machine_kwargs))
        except (ConfigError, TypeError) as exc:
            raise SweepConfigError(f"[sweep] configs {text!r}: {exc}") from None

    spec = SweepSpec(
        configs=configs,
        kernels=_split_list(get("kernels", "names", ", ".join(KERNEL_NAMES))),
        barriers=_split_list(get("sweep", "barriers", "hard, soft")),
        iterations=get("sweep", "iterations", 8, int),
        seeds=[int(s) for s in _split_list(get("sweep", "seeds", "1"))],
        out_dir=get("output", "dir", "out"),
        trace_format=get("output", "trace", "jsonl"),
        provenance=prov,
    )
    if spec.trace_format not in ("jsonl", "none"):
        raise SweepConfigError(f"[output] trace must be jsonl or none, got {spec.trace_format!r}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec.validate()
    except ConfigError as exc:
        raise SweepConfigError(str(exc)) from None
    return spec


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def point_name(cfg: SystemConfig, kernel: str, barrier: str, seed: int) -> str:
    return f"{kernel}_{cfg.label()}_{barrier}_s{seed}"


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def run_point(cfg: SystemConfig, kernel_name: str, barrier: str, seed: int,
              iterations: int, out_dir: str | None, trace_format: str) -> dict:
    """Simulate one sweep point, verify its oracle, write its artifacts."""
    name = point_name(cfg, kernel_name, barrier, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        machine = validate_config(cfg)
        kernel = make_kernel(kernel_name, machine)
        eng = Engine(machine, kernel, barrier, iterations, seed)
        trace = eng.run()
        lo, hi = kernel.output_window() if iterations else (0, 0)
        expected = oracle(kernel, seed, iterations) if iterations else None
        oracle_ok = bool(iterations == 0
                         or np.array_equal(eng.l2[lo:hi], expected))
        timeline = M.extract_timeline(trace)
        breakdown = M.activity_breakdown(trace)
        drift = M.compute_drift(trace, timeline)
        steady = (M.steady_phase(trace, timeline)
                  if trace.n_phases >= 4 else None)

    cats = breakdown["categories"]
    wall = sum(cats.values()) or 1
    summary = {
        "point": name,
        "kernel": kernel_name,
        "config": cfg.label(),
        "barrier": barrier,
        "seed": seed,
        "iterations": iterations,
        "phases": trace.n_phases,
        "total_cycles": trace.total_cycles,
        "oracle_ok": oracle_ok,
        "boundedness": classify_boundedness(kernel, machine),
        "steady_throughput": steady.throughput if steady else 0.0,
        "steady_window": steady.duration if steady else 0,
        "drift_cum_pct": drift.cumulative_pct,
        "drift_final_pct": drift.final_gap_pct,
        "drift_per_phase": drift.per_phase,
        "ipc": breakdown["ipc"],
        "utilization": breakdown["utilization"],
        "compute_pct": 100.0 * cats["compute"] / wall,
        "control_pct": 100.0 * cats["control"] / wall,
        "lsu_pct": 100.0 * cats["lsu-stall"] / wall,
        "sync_pct": 100.0 * cats["sync-idle"] / wall,
        "timeline": [
            {"cluster": r.cluster, "phase": r.phase,
             "first_start": r.first_start, "all_active": r.all_active,
             "last_end": r.last_end, "dma_kind": r.dma_kind,
             "dma_start": r.dma_start, "dma_end": r.dma_end}
            for r in timeline],
    }
    if out_dir is not None:
        pdir = os.path.join(out_dir, name)
        os.makedirs(pdir, exist_ok=True)
        if trace_format == "jsonl":
            tmp = os.path.join(pdir, "trace.jsonl.tmp")
            trace.to_jsonl(tmp)
            os.replace(tmp, os.path.join(pdir, "trace.jsonl"))
        _atomic_write(os.path.join(pdir, "point.json"),
                      json.dumps(summary, sort_keys=True, indent=1))
    return summary


def _worker(args) -> dict:
    cfg, kernel, barrier, seed, iterations, out_dir, trace_format = args
    try:
        return run_point(cfg, kernel, barrier, seed, iterations, out_dir, trace_format)
    except (SimulationError, ConfigError, ValueError) as exc:
        return {
            "point": point_name(cfg, kernel, barrier, seed),
            "kernel": kernel, "config": cfg.label(), "barrier": barrier,
            "seed": seed, "error": f"{type(exc).__name__}: {exc}",
            "oracle_ok": False,
        }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(col, "")) for col in header])
    _atomic_write(path, buf.getvalue())


_SUMMARY_COLS = [
    "point", "kernel", "config", "barrier", "seed", "phases", "total_cycles",
    "oracle_ok", "boundedness", "steady_throughput", "steady_window",
    "drift_cum_pct", "drift_final_pct", "ipc", "utilization",
    "compute_pct", "control_pct", "lsu_pct", "sync_pct", "error",
]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> dict:
    """Run every sweep point, write the report bundle, return a digest."""
    spec.validate()
    os.makedirs(spec.out_dir, exist_ok=True)
    tasks = [(cfg, kernel, barrier, seed, spec.iterations, spec.out_dir,
              spec.trace_format)
             for (cfg, kernel, barrier, seed) in spec.points()]
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    results.sort(key=lambda r: r["point"])

    _write_csv(os.path.join(spec.out_dir, "summary.csv"), _SUMMARY_COLS, results)

    by_key = {(r["kernel"], r["config"], r["barrier"], r["seed"]): r
              for r in results if "error" not in r}

    relperf = []
    for (kernel, config, barrier, seed), r in sorted(by_key.items()):
        if barrier != "soft":
            continue
        base = by_key.get((kernel, config, "hard", seed))
        if base and base["steady_throughput"]:
            relperf.append({
                "kernel": kernel, "config": config, "seed": seed,
                "soft_over_hard_steady": r["steady_throughput"] / base["steady_throughput"],
                "soft_over_hard_runtime": base["total_cycles"] / r["total_cycles"],
            })
    _write_csv(os.path.join(spec.out_dir, "relperf.csv"),
               ["kernel", "config", "seed", "soft_over_hard_steady",
                "soft_over_hard_runtime"], relperf)

    baseline_label = spec.configs[-1].label()
    clustersize = []
    for (kernel, config, barrier, seed), r in sorted(by_key.items()):
        base = by_key.get((kernel, baseline_label, barrier, seed))
        if base and base["steady_throughput"]:
            clustersize.append({
                "kernel": kernel, "barrier": barrier, "config": config,
                "seed": seed,
                "steady_vs_baseline": r["steady_throughput"] / base["steady_throughput"],
                "runtime_vs_baseline": base["total_cycles"] / r["total_cycles"],
            })
    _write_csv(os.path.join(spec.out_dir, "clustersize.csv"),
               ["kernel", "barrier", "config", "seed", "steady_vs_baseline",
                "runtime_vs_baseline"], clustersize)

    drift_rows = [{
        "kernel": r["kernel"], "config": r["config"], "barrier": r["barrier"],
        "seed": r["seed"], "drift_cum_pct": r["drift_cum_pct"],
        "drift_final_pct": r["drift_final_pct"],
    } for r in results if "error" not in r]
    _write_csv(os.path.join(spec.out_dir, "drift.csv"),
               ["kernel", "config", "barrier", "seed", "drift_cum_pct",
                "drift_final_pct"], drift_rows)

    meta = {
        "points": len(results),
        "errors": sorted(r["point"] for r in results if "error" in r),
        "oracle_failures": sorted(
            r["point"] for r in results if not r.get("oracle_ok", False)),
        "provenance": spec.provenance,
        "iterations": spec.iterations,
        "baseline_config": baseline_label,
    }
    _atomic_write(os.path.join(spec.out_dir, "sweep.json"),
                  json.dumps(meta, sort_keys=True, indent=1))
    return meta


# ---------------------------------------------------------------------------
# report figures
# ---------------------------------------------------------------------------


def _load_points(bundle: str) -> list[dict]:
    points = []
    for entry in sorted(os.listdir(bundle)):
        pj = os.path.join(bundle, entry, "point.json")
        if os.path.isfile(pj):
            with open(pj) as fh:
                points.append(json.load(fh))
    if not points:
        raise SweepConfigError(f"no point.json files under {bundle}")
    return points


def write_figure(bundle: str, figure: str, out=sys.stdout) -> None:
    """Emit columnar plot data for one figure family."""
    points = _load_points(bundle)
    if figure == "timeline":
        out.write("# point cluster phase first_start all_active last_end"
                  " dma_kind dma_start dma_end\n")
        for p in points:
            for r in p.get("timeline", []):
                out.write(f"{p['point']} {r['cluster']} {r['phase']} "
                          f"{r['first_start']} {r['all_active']} {r['last_end']} "
                          f"{r['dma_kind']} {r['dma_start']} {r['dma_end']}\n")
    elif figure == "relperf":
        out.write("# kernel config seed soft_over_hard_steady\n")
        by_key = {(p["kernel"], p["config"], p["barrier"], p["seed"]): p
                  for p in points}
        for (kernel, config, barrier, seed), p in sorted(by_key.items()):
            if barrier != "soft":
                continue
            base = by_key.get((kernel, config, "hard", seed))
            if base and base["steady_throughput"]:
                ratio = p["steady_throughput"] / base["steady_throughput"]
                out.write(f"{kernel} {config} {seed} {ratio:.6f}\n")
    elif figure == "breakdown":
        out.write("# point compute_pct control_pct lsu_pct sync_pct ipc utilization\n")
        for p in points:
            out.write(f"{p['point']} {p['compute_pct']:.3f} {p['control_pct']:.3f} "
                      f"{p['lsu_pct']:.3f} {p['sync_pct']:.3f} "
                      f"{p['ipc']:.4f} {p['utilization']:.4f}\n")
    elif figure == "drift":
        out.write("# point drift_cum_pct drift_final_pct per_phase...\n")
        for p in points:
            series = " ".join(str(v) for v in p.get("drift_per_phase", []))
            out.write(f"{p['point']} {p['drift_cum_pct']:.4f} "
                      f"{p['drift_final_pct']:.4f} {series}\n")
    else:
        raise SweepConfigError(f"unknown figure {figure!r}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="clustersim",
        description="multi-cluster double-buffering simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep (config file or preset)")
    run_p.add_argument("config", nargs="?", help="sweep config file (INI)")
    run_p.add_argument("--preset", choices=["paper"],
                       help="use a built-in sweep instead of a config file")
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--seed", type=int, action="append", dest="seeds",
                       help="override sweep seeds (repeatable)")
    run_p.add_argument("--out", help="output bundle directory")
    run_p.add_argument("--trace-format", choices=["jsonl", "none"])
    run_p.add_argument("--iterations", type=int)
    run_p.add_argument("--allow-uneven", action="store_true",
                       help="permit configs with different total core counts")

    val_p = sub.add_parser("validate", help="validate a sweep config file")
    val_p.add_argument("config")

    rep_p = sub.add_parser("report", help="emit figure data from a bundle")
    rep_p.add_argument("bundle")
    rep_p.add_argument("--figure", required=True,
                       choices=["timeline", "relperf", "breakdown", "drift"])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            spec = parse_config(args.config)
            n = sum(1 for _ in spec.points())
            print(f"ok: {len(spec.configs)} configs x {len(spec.kernels)} kernels "
                  f"x {len(spec.barriers)} barriers x {len(spec.seeds)} seeds "
                  f"= {n} points")
            return 0
        if args.command == "report":
            write_figure(args.bundle, args.figure)
            return 0
        # run
        if args.preset == "paper":
            spec = paper_sweep(args.out or "out")
        elif args.config:
            spec = parse_config(args.config)
        else:
            print("error: provide a config file or --preset paper", file=sys.stderr)
            return 2
        if args.out:
            spec.out_dir = args.out
        if args.seeds:
            spec.seeds = args.seeds
        if args.trace_format:
            spec.trace_format = args.trace_format
        if args.iterations is not None:
            spec.iterations = args.iterations
        if args.allow_uneven:
            spec.allow_uneven = True
        meta = run_sweep(spec, jobs=args.jobs)
        bad = meta["errors"] or meta["oracle_failures"]
        print(f"{meta['points']} points -> {spec.out_dir}"
              + (f" ({len(meta['errors'])} errors,"
                 f" {len(meta['oracle_failures'])} oracle failures)" if bad else ""))
        return 1 if bad else 0
    except (SweepConfigError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
