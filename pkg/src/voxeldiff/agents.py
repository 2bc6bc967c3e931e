"""Cell agents as point sources and sinks of substrates.

An agent of volume ``V`` in a voxel of volume ``Vv`` drives that voxel by

    d rho / dt = (V/Vv) * (S * (target - rho) - U * rho)

which is integrated with one backward-Euler step per diffusion step.  All
agents of a voxel are applied one after another in ascending id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .backend import as_strategy
from .errors import StateError
from .mesh import CartesianMesh, DensityField, nearest_voxel


@dataclass
class CellAgent:
    id: int
    position: np.ndarray
    volume: float
    secretion_rates: np.ndarray
    uptake_rates: np.ndarray
    saturation_densities: np.ndarray
    voxel: int = -1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.secretion_rates = np.atleast_1d(np.asarray(self.secretion_rates, dtype=np.float64))
        self.uptake_rates = np.atleast_1d(np.asarray(self.uptake_rates, dtype=np.float64))
        self.saturation_densities = np.atleast_1d(
            np.asarray(self.saturation_densities, dtype=np.float64))
        if self.position.shape != (3,):
            raise ValueError(f"agent {self.id}: position must be a 3-vector")
        if not self.volume > 0:
            raise ValueError(f"agent {self.id}: volume must be positive")
        n = self.secretion_rates.size
        if self.uptake_rates.size != n or self.saturation_densities.size != n:
            raise ValueError(f"agent {self.id}: rate vectors differ in length")
        for name in ("secretion_rates", "uptake_rates", "saturation_densities"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"agent {self.id}: negative {name.replace('_', ' ')}")

    @property
    def n_substrates(self) -> int:
        return self.secretion_rates.size


@dataclass
class AgentPopulation:
    """Agents plus a voxel -> ordered agent id grouping.

    ``groups`` maps each occupied voxel to the ids of its agents in
    ascending order.  Call :func:`rebuild_voxel_grouping` after changing
    positions.
    """

    agents: list[CellAgent] = field(default_factory=list)
    groups: dict[int, list[int]] = field(default_factory=dict)

    def __len__(self):
        return len(self.agents)

    def __iter__(self):
        return iter(self.agents)

    def by_id(self) -> dict[int, CellAgent]:
        return {a.id: a for a in self.agents}


def rebuild_voxel_grouping(agents: AgentPopulation, mesh: CartesianMesh) -> AgentPopulation:
    groups: dict[int, list[int]] = {}
    for agent in agents.agents:
        agent.voxel = nearest_voxel(agent.position, mesh)
        groups.setdefault(agent.voxel, []).append(agent.id)
    agents.groups = {v: sorted(ids) for v, ids in sorted(groups.items())}
    return agents


def make_population(agents: Iterable[CellAgent], mesh: CartesianMesh) -> AgentPopulation:
    agents = list(agents)
    ids = [a.id for a in agents]
    if len(set(ids)) != len(ids):
        raise ValueError("agent ids must be unique")
    return rebuild_voxel_grouping(AgentPopulation(agents), mesh)


class SourceTable:
    """Per-step constants of the agent update, packed by voxel group.

    Rows of ``gain`` (``dt*f*S*target``) and ``loss`` (``1 + dt*f*(S+U)``)
    follow the grouping order, so the compiled kernel walks them
    sequentially.
    """

    def __init__(self, agents: AgentPopulation, mesh: CartesianMesh, dt: float,
                 n_substrates: int):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        lookup = agents.by_id()
        n_vox = mesh.n_voxels
        voxels, offsets, rows = [], [0], []
        for v, ids in agents.groups.items():
            if not 0 <= v < n_vox:
                raise StateError(f"agent voxel {v} outside mesh of {n_vox} voxels")
            for i in ids:
                a = lookup[i]
                if a.voxel != v:
                    raise StateError(f"agent {i} cached voxel {a.voxel} disagrees with grouping {v}")
                if a.n_substrates != n_substrates:
                    raise StateError(f"agent {i} has {a.n_substrates} substrates, expected {n_substrates}")
                rows.append(a)
            voxels.append(v)
            offsets.append(len(rows))
        self.dt = dt
        self.voxels = np.array(voxels, dtype=np.int64)
        self.offsets = np.array(offsets, dtype=np.int64)
        self.gain = np.zeros((len(rows), n_substrates))
        self.loss = np.ones((len(rows), n_substrates))
        vv = mesh.voxel_volume
        for r, a in enumerate(rows):
            f = a.volume / vv
            self.gain[r] = dt * f * a.secretion_rates * a.saturation_densities
            self.loss[r] = 1.0 + dt * f * (a.secretion_rates + a.uptake_rates)

    @property
    def n_groups(self) -> int:
        return self.voxels.size


def cell_sources_sinks_step(field: DensityField, agents, mesh: CartesianMesh = None,
                            dt: float = None, backend=None) -> DensityField:
    """Apply every agent's secretion/uptake for one step, in place.

    ``agents`` is an :class:`AgentPopulation` (then ``mesh`` and ``dt`` are
    required) or a prebuilt :class:`SourceTable`.
    """
    if isinstance(agents, SourceTable):
        table = agents
    else:
        if mesh is None or dt is None:
            raise ValueError("mesh and dt are required with an AgentPopulation")
        table = SourceTable(agents, mesh, dt, field.n_substrates)
    if table.n_groups == 0:
        return field
    if table.gain.shape[1] != field.n_substrates:
        raise StateError("source table substrate count does not match field")
    if table.voxels[-1] >= field.n_voxels:
        raise StateError(f"agent voxel {table.voxels[-1]} outside field")
    rho = field.per_voxel()
    strategy, owned = as_strategy(backend)
    try:
        blocks = [(rho, table.voxels, table.offsets, table.gain, table.loss, g0, g1)
                  for g0, g1 in strategy.chunks(table.n_groups)]
        strategy.run(kernels.agent_sources, blocks)
    finally:
        if owned:
            strategy.close()
    return field


def steady_state_density(secretion: Sequence[float], uptake: Sequence[float],
                         target: Sequence[float]) -> np.ndarray:
    """Fixed point ``S*target/(S+U)`` of the update (``nan`` where ``S+U == 0``)."""
    S = np.asarray(secretion, dtype=np.float64)
    U = np.asarray(uptake, dtype=np.float64)
    T = np.asarray(target, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(S + U > 0, S * T / (S + U), np.nan)
