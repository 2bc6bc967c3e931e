"""Multi-substrate voxel diffusion kernel for hybrid agent-based simulations."""

from .agents import (AgentPopulation, CellAgent, SourceTable, cell_sources_sinks_step,
                     make_population, rebuild_voxel_grouping)
from .backend import BackendKind, select_backend
from .config import SimConfig, load_agents, parse_config, save_agents, serialize_config
from .engine import RunMetrics, Simulation, SimulationClock, build_simulation, run_simulation
from .errors import (BoundsError, ConfigError, ConfigParseError, DomainError, LayoutError,
                     LoadError, StateError, VoxelDiffError)
from .mesh import (CartesianMesh, DensityField, DirichletMap, Microenvironment, SubstrateParams,
                   nearest_voxel, translate_array_to_vector, translate_vector_to_array,
                   voxel_coords, voxel_index)
from .solver import (SolverWorkspace, apply_dirichlet_conditions, axpy, build_workspaces,
                     diffuse_decay_step, diffusion_sweep, naxpy, precompute_thomas_coefficients,
                     thomas_solve)
from .validation import (ConvergenceReport, CrossCheckReport, analytic_solution_1d, cross_check,
                         render_snapshot, run_convergence_test)

__version__ = "0.1.0"

__all__ = [
    "AgentPopulation", "CellAgent", "SourceTable", "cell_sources_sinks_step", "make_population",
    "rebuild_voxel_grouping", "BackendKind", "select_backend", "SimConfig", "load_agents",
    "parse_config", "save_agents", "serialize_config", "RunMetrics", "Simulation",
    "SimulationClock", "build_simulation", "run_simulation", "BoundsError", "ConfigError",
    "ConfigParseError", "DomainError", "LayoutError", "LoadError", "StateError",
    "VoxelDiffError", "CartesianMesh", "DensityField", "DirichletMap", "Microenvironment",
    "SubstrateParams", "nearest_voxel", "translate_array_to_vector",
    "translate_vector_to_array", "voxel_coords", "voxel_index", "SolverWorkspace",
    "apply_dirichlet_conditions", "axpy", "build_workspaces", "diffuse_decay_step",
    "diffusion_sweep", "naxpy", "precompute_thomas_coefficients", "thomas_solve",
    "ConvergenceReport", "CrossCheckReport", "analytic_solution_1d", "cross_check",
    "render_snapshot", "run_convergence_test",
]

