"""Wall-clock benchmark: workloads x backends, median of repetitions.

The built-in suite runs 60, 180 and 360 simulated minutes on the
2 mm cube (-1000..1000 um, 20 um voxels) with serial, parallel(1) and
parallel(max) backends.  Results come out as a workload-by-backend table
of median wall times with speedups relative to serial, plus a per-phase
time breakdown.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .backend import BackendKind
from .config import AgentRates, AgentSource, SimConfig, SubstrateConfig, parse_config
from .engine import RunMetrics, run_simulation
from .errors import ConfigError, VoxelDiffError

log = logging.getLogger(__name__)

WORKLOAD_MINUTES = (60.0, 180.0, 360.0)


class BenchmarkError(VoxelDiffError, RuntimeError):
    def __init__(self, label, cause):
        self.label = label
        super().__init__(f"benchmark case {label!r} failed: {cause}")


def backend_key(kind: BackendKind) -> str:
    return "serial" if kind.name == "serial" else f"parallel{kind.workers}"


@dataclass
class BenchCase:
    label: str
    overrides: dict


@dataclass
class BenchmarkSuite:
    base: SimConfig
    cases: list[BenchCase]
    backends: list[BackendKind]
    repetitions: int = 3
    results: dict[tuple[str, str], list[RunMetrics]] = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("must be >= 1", field="repetitions")
        if not self.cases:
            raise ConfigError("suite has no cases", field="cases")
        if BackendKind.serial() not in self.backends:
            raise ConfigError("the serial reference backend is required", field="backends")
        labels = [c.label for c in self.cases]
        if len(set(labels)) != len(labels):
            raise ConfigError("case labels must be unique", field="cases")
        keys = [backend_key(b) for b in self.backends]
        if len(set(keys)) != len(keys):
            raise ConfigError("duplicate backend", field="backends")
        for c in self.cases:
            try:
                self.config_for(c, BackendKind.serial())
            except ConfigError as exc:
                raise ConfigError(exc.reason, field=f"cases[{c.label}]/{exc.field}") from None

    def config_for(self, case: BenchCase, backend: BackendKind) -> SimConfig:
        return self.base.with_overrides(**case.overrides, backend=backend)


def benchmark_config(profile: str = "full") -> SimConfig:
    """Base geometry: ``full`` is the 100^3 cube, ``quick`` a 16^3 cube for CI."""
    if profile == "full":
        lo, hi, count = -1000.0, 1000.0, 500
    elif profile == "quick":
        lo, hi, count = -160.0, 160.0, 20
    else:
        raise ConfigError(f"unknown profile {profile!r}", field="profile")
    return SimConfig(
        lo, hi, lo, hi, lo, hi,
        substrates=[
            SubstrateConfig("oxygen", 100000.0, 0.1, 38.0, 38.0),
        ],
        agents=AgentSource(count=count, placement="random", seed=1,
                           rates={"oxygen": AgentRates(0.0, 10.0, 0.0)}),
        snapshot_interval=0.0,
    ).validate()


def default_suite(profile: str = "full", workers: int | None = None,
                  repetitions: int = 3) -> BenchmarkSuite:
    """60/180/360-minute rows; the quick profile scales workloads by 1/10."""
    base = benchmark_config(profile)
    scale = 1.0 if profile == "full" else 0.1
    cases = [BenchCase(f"{m * scale:g} min", {"max_time": m * scale}) for m in WORKLOAD_MINUTES]
    workers = workers or os.cpu_count() or 1
    backends = [BackendKind.serial(), BackendKind.parallel(1)]
    if workers > 1:
        backends.append(BackendKind.parallel(workers))
    return BenchmarkSuite(base, cases, backends, repetitions)


def load_suite(path) -> BenchmarkSuite:
    """Read a JSON suite file::

        {"config": "base.xml", "repetitions": 3,
         "backends": ["serial", "parallel:1", "parallel:8"],
         "cases": [{"label": "60 min", "overrides": {"max_time": 60}}]}

    ``config`` is relative to the suite file; ``"profile": "quick"`` may
    replace it to use a built-in geometry.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}: {exc.msg}", field=str(path)) from None
    unknown = set(data) - {"config", "profile", "repetitions", "backends", "cases"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=str(path))
    if "config" in data:
        cfg_path = Path(data["config"])
        base = parse_config(cfg_path if cfg_path.is_absolute() else path.parent / cfg_path)
    else:
        base = benchmark_config(data.get("profile", "full"))
    backends = [BackendKind.parse(b) for b in data.get("backends", ["serial"])]
    cases = [BenchCase(c["label"], dict(c.get("overrides", {}))) for c in data.get("cases", [])]
    return BenchmarkSuite(base, cases, backends, int(data.get("repetitions", 3)))


@dataclass
class BenchRow:
    label: str
    max_time: float
    median_seconds: dict[str, float]
    speedup: dict[str, float]
    phases: dict[str, dict[str, float]]


def run_benchmark(suite: BenchmarkSuite,
                  progress: Callable[[str], None] | None = None) -> list[BenchRow]:
    """Run every case on every backend, strictly one after another.

    Each backend first runs one untimed step so that kernel loading and
    thread start-up stay out of the measurements.
    """
    for backend in suite.backends:
        warm = suite.base.with_overrides(max_time=suite.base.dt_diff, snapshot_interval=0.0,
                                         backend=backend)
        run_simulation(warm)
    rows = []
    for case in suite.cases:
        medians, phases = {}, {}
        cfg = None
        for backend in suite.backends:
            key = backend_key(backend)
            runs = []
            try:
                cfg = suite.config_for(case, backend)
                for rep in range(suite.repetitions):
                    metrics, _ = run_simulation(cfg)
                    runs.append(metrics)
                    if progress:
                        progress(f"{case.label} {backend.label} rep {rep + 1}/{suite.repetitions}: "
                                 f"{metrics.wall_seconds:.3f} s")
            except Exception as exc:
                raise BenchmarkError(f"{case.label} [{backend.label}]", exc) from exc
            suite.results[(case.label, key)] = runs
            medians[key] = statistics.median(m.wall_seconds for m in runs)
            phases[key] = _phase_shares(runs)
        ref = medians["serial"]
        speedup = {k: (1.0 if k == "serial" else (ref / v if v > 0 else float("inf")))
                   for k, v in medians.items()}
        rows.append(BenchRow(case.label, cfg.max_time, medians, speedup, phases))
    return rows


def _phase_shares(runs: list[RunMetrics]) -> dict[str, float]:
    total = sum(m.wall_seconds for m in runs)
    parts = {
        "diffusion": sum(m.diffusion_seconds for m in runs),
        "sources": sum(m.source_seconds for m in runs),
        "hooks": sum(m.hook_seconds for m in runs),
        "io": sum(m.io_seconds for m in runs),
    }
    if total <= 0:
        return {**{k: 0.0 for k in parts}, "overhead": 0.0}
    shares = {k: v / total for k, v in parts.items()}
    shares["overhead"] = max(0.0, 1.0 - sum(shares.values()))
    return shares


def write_bench_table(rows: list[BenchRow], path) -> Path:
    path = Path(path)
    keys = list(rows[0].median_seconds)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["workload", "max_time"] + [f"{k}_seconds" for k in keys]
                   + [f"{k}_speedup" for k in keys])
        for r in rows:
            w.writerow([r.label, f"{r.max_time:g}"]
                       + [f"{r.median_seconds[k]:.4f}" for k in keys]
                       + [f"{r.speedup[k]:.2f}" for k in keys])
    return path


def write_phase_table(rows: list[BenchRow], path) -> Path:
    path = Path(path)
    phase_names = ("diffusion", "sources", "hooks", "io", "overhead")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["workload", "backend"] + list(phase_names))
        for r in rows:
            for key, shares in r.phases.items():
                w.writerow([r.label, key] + [f"{shares[p]:.4f}" for p in phase_names])
    return path


def format_rows(rows: list[BenchRow]) -> str:
    keys = list(rows[0].median_seconds)
    head = f"{'workload':<10}" + "".join(f"{k:>14}" for k in keys) + "".join(f"{k + ' x':>16}" for k in keys)
    lines = [head]
    for r in rows:
        lines.append(f"{r.label:<10}" + "".join(f"{r.median_seconds[k]:>13.3f}s" for k in keys)
                     + "".join(f"{r.speedup[k]:>16.2f}" for k in keys))
    lines.append("phase share of wall time (serial): " + ", ".join(
        f"{r.label}: diffusion {100 * r.phases['serial']['diffusion']:.1f}%" for r in rows))
    return "\n".join(lines)
