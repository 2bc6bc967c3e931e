"""Time stepping across the diffusion / mechanics / cell time scales."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .agents import AgentPopulation, SourceTable, cell_sources_sinks_step, rebuild_voxel_grouping
from .backend import BackendKind, select_backend
from .errors import ConfigError, VoxelDiffError
from .mesh import Microenvironment
from .solver import apply_dirichlet_conditions, build_workspaces, diffuse_decay_step

log = logging.getLogger(__name__)

_RATIO_TOL = 1e-9


def integer_ratio(numer: float, denom: float, name: str) -> int:
    ratio = numer / denom
    n = round(ratio)
    if n < 1 or abs(ratio - n) > _RATIO_TOL * max(1.0, ratio):
        raise ConfigError(f"step ratio {ratio:g} is not a positive integer", field=name)
    return int(n)


@dataclass
class SimulationClock:
    """Step counters for the three nested time scales.

    Simulated time is ``diffusion_steps * dt_diff``; nothing is accumulated
    in floating point.
    """

    dt_diff: float = 0.01
    dt_mech: float = 0.1
    dt_cell: float = 6.0
    t_max: float = 0.0
    diffusion_steps: int = 0
    mechanics_steps: int = 0
    cell_steps: int = 0

    def __post_init__(self):
        for name in ("dt_diff", "dt_mech", "dt_cell"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", field=name)
        if not self.t_max >= 0:
            raise ConfigError("must be non-negative", field="max_time")
        self.mech_ratio = integer_ratio(self.dt_mech, self.dt_diff, "dt_mech")
        self.cell_ratio = integer_ratio(self.dt_cell, self.dt_mech, "dt_cell")

    @property
    def t_now(self) -> float:
        return self.diffusion_steps * self.dt_diff

    @property
    def total_diffusion_steps(self) -> int:
        return max(0, math.ceil(self.t_max / self.dt_diff - _RATIO_TOL))

    @property
    def done(self) -> bool:
        return self.diffusion_steps >= self.total_diffusion_steps

    def tick(self) -> tuple[bool, bool]:
        """Count one diffusion step; return ``(mechanics_due, cell_due)``."""
        self.diffusion_steps += 1
        if self.diffusion_steps % self.mech_ratio:
            return False, False
        self.mechanics_steps += 1
        if self.mechanics_steps % self.cell_ratio:
            return True, False
        self.cell_steps += 1
        return True, True


@dataclass
class RunMetrics:
    wall_seconds: float = 0.0
    diffusion_seconds: float = 0.0
    source_seconds: float = 0.0
    hook_seconds: float = 0.0
    io_seconds: float = 0.0
    diffusion_steps: int = 0
    mechanics_steps: int = 0
    cell_steps: int = 0
    snapshots: int = 0
    backend: str = "serial"

    @property
    def overhead_seconds(self) -> float:
        return max(0.0, self.wall_seconds - self.diffusion_seconds - self.source_seconds
                   - self.hook_seconds - self.io_seconds)

    def fractions(self) -> dict[str, float]:
        total = self.wall_seconds
        if total <= 0:
            return {k: 0.0 for k in ("diffusion", "sources", "hooks", "io", "overhead")}
        return {
            "diffusion": self.diffusion_seconds / total,
            "sources": self.source_seconds / total,
            "hooks": self.hook_seconds / total,
            "io": self.io_seconds / total,
            "overhead": self.overhead_seconds / total,
        }

    def compute_fractions(self) -> dict[str, float]:
        """Phase shares of compute time (diffusion + sources + hooks)."""
        compute = self.diffusion_seconds + self.source_seconds + self.hook_seconds
        if compute <= 0:
            return {"diffusion": 0.0, "sources": 0.0, "hooks": 0.0}
        return {"diffusion": self.diffusion_seconds / compute,
                "sources": self.source_seconds / compute,
                "hooks": self.hook_seconds / compute}

    def as_dict(self) -> dict:
        d = {
            "backend": self.backend,
            "wall_seconds": self.wall_seconds,
            "diffusion_seconds": self.diffusion_seconds,
            "source_seconds": self.source_seconds,
            "hook_seconds": self.hook_seconds,
            "io_seconds": self.io_seconds,
            "overhead_seconds": self.overhead_seconds,
            "steps": self.diffusion_steps,
            "mechanics_steps": self.mechanics_steps,
            "cell_steps": self.cell_steps,
            "snapshots": self.snapshots,
        }
        d.update({f"fraction_{k}": v for k, v in self.fractions().items()})
        return d

    def to_lines(self) -> list[str]:
        out = []
        for k, v in self.as_dict().items():
            out.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return out

    def summary(self) -> str:
        f = self.fractions()
        return (f"{self.diffusion_steps} diffusion / {self.mechanics_steps} mechanics / "
                f"{self.cell_steps} cell steps on {self.backend} in {self.wall_seconds:.3f} s "
                f"(diffusion {100 * f['diffusion']:.1f}%, sources {100 * f['sources']:.1f}%, "
                f"hooks {100 * f['hooks']:.1f}%, io {100 * f['io']:.1f}%)")


Hook = Callable[["Simulation"], None]


class Simulation:
    """Microenvironment, agents and clock advanced together.

    Mechanics and cell hooks receive the simulation and may move agents or
    edit ``microenv.dirichlet``; after moving agents they must call
    :meth:`refresh_agents`.
    """

    def __init__(self, microenv: Microenvironment, agents: AgentPopulation | None,
                 clock: SimulationClock, backend: BackendKind | None = None,
                 hooks: Mapping[str, Hook] | None = None,
                 snapshot_interval: float | None = None, snapshot_dir: str | Path | None = None,
                 apply_dirichlet=apply_dirichlet_conditions):
        self.microenv = microenv
        self.agents = agents if agents is not None else AgentPopulation()
        self.clock = clock
        self.backend = backend or BackendKind.serial()
        hooks = dict(hooks or {})
        unknown = set(hooks) - {"mechanics", "cell"}
        if unknown:
            raise ValueError(f"unknown hooks: {sorted(unknown)}")
        self.mechanics_hook = hooks.get("mechanics")
        self.cell_hook = hooks.get("cell")
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir is not None else None
        self.snapshot_every = None
        if snapshot_interval and snapshot_interval > 0 and self.snapshot_dir is not None:
            self.snapshot_every = integer_ratio(snapshot_interval, clock.dt_diff, "snapshot_interval")
        self.apply_dirichlet = apply_dirichlet
        self.workspaces = build_workspaces(microenv.mesh, microenv.substrates, clock.dt_diff)
        self.metrics = RunMetrics(backend=self.backend.label)
        self.snapshot_files: list[Path] = []
        self.refresh_agents()

    @property
    def density(self):
        return self.microenv.density

    def refresh_agents(self) -> None:
        rebuild_voxel_grouping(self.agents, self.microenv.mesh)
        self._sources = SourceTable(self.agents, self.microenv.mesh, self.clock.dt_diff,
                                    self.microenv.n_substrates)

    def write_snapshot(self) -> None:
        from .validation import render_snapshot

        mesh = self.microenv.mesh
        z = mesh.nz // 2
        step = self.clock.diffusion_steps
        for s, name in enumerate(self.microenv.names):
            stem = self.snapshot_dir / f"snapshot_{step:08d}_{name}"
            self.snapshot_files += render_snapshot(self.density, s, z, stem)
        self.metrics.snapshots += 1

    def run(self) -> RunMetrics:
        clock, m = self.clock, self.metrics
        perf = time.perf_counter
        start = perf()
        if self.snapshot_every is not None:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        self.apply_dirichlet(self.density, self.microenv.dirichlet)
        with select_backend(self.backend) as strategy:
            if self.snapshot_every is not None and clock.diffusion_steps % self.snapshot_every == 0:
                t0 = perf()
                self.write_snapshot()
                m.io_seconds += perf() - t0
            while not clock.done:
                step = clock.diffusion_steps
                t0 = perf()
                try:
                    diffuse_decay_step(self.density, self.workspaces, self.microenv.dirichlet,
                                       strategy, apply_dirichlet=self.apply_dirichlet)
                    t1 = perf()
                    cell_sources_sinks_step(self.density, self._sources, backend=strategy)
                except VoxelDiffError as exc:
                    raise type(exc)(f"diffusion step {step} (t={clock.t_now:g} min): {exc}") from exc
                t2 = perf()
                m.diffusion_seconds += t1 - t0
                m.source_seconds += t2 - t1
                mech_due, cell_due = clock.tick()
                if mech_due and self.mechanics_hook is not None:
                    self.mechanics_hook(self)
                if cell_due and self.cell_hook is not None:
                    self.cell_hook(self)
                t3 = perf()
                m.hook_seconds += t3 - t2
                if self.snapshot_every is not None and clock.diffusion_steps % self.snapshot_every == 0:
                    self.write_snapshot()
                    m.io_seconds += perf() - t3
        m.wall_seconds += perf() - start
        m.diffusion_steps = clock.diffusion_steps
        m.mechanics_steps = clock.mechanics_steps
        m.cell_steps = clock.cell_steps
        log.info(m.summary())
        return m


def run_simulation(config, hooks: Mapping[str, Hook] | None = None,
                   backend: BackendKind | None = None, snapshot_dir=None,
                   apply_dirichlet=apply_dirichlet_conditions):
    """Build a :class:`Simulation` from a ``SimConfig`` and run it to ``max_time``.

    Returns ``(metrics, final_density)``.  Snapshots go to ``snapshot_dir``
    (default: ``<config folder>/snapshots``) at the configured interval.
    """
    sim = build_simulation(config, hooks=hooks, backend=backend, snapshot_dir=snapshot_dir,
                           apply_dirichlet=apply_dirichlet)
    metrics = sim.run()
    return metrics, sim.density


def build_simulation(config, hooks=None, backend=None, snapshot_dir=None,
                     apply_dirichlet=apply_dirichlet_conditions) -> Simulation:
    microenv = config.build_microenvironment()
    agents = config.build_agents(microenv.mesh)
    clock = SimulationClock(config.dt_diff, config.dt_mech, config.dt_cell, config.max_time)
    if snapshot_dir is None and config.snapshot_interval:
        snapshot_dir = Path(config.folder) / "snapshots"
    return Simulation(microenv, agents, clock, backend=backend or config.backend, hooks=hooks,
                      snapshot_interval=config.snapshot_interval, snapshot_dir=snapshot_dir,
                      apply_dirichlet=apply_dirichlet)
