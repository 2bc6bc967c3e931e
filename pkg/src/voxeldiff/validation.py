"""Checks that a solver build produces the right numbers.

* a 1-D analytic convergence study (cosine mode with zero-flux ends),
* a voxel-by-voxel comparison of two density fields,
* text snapshots (ASCII graymap plus value table) for inspection and diffing,
* a mutation test showing the last two catch an off-by-one Dirichlet bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import BackendKind, select_backend
from .mesh import CartesianMesh, DensityField, Microenvironment, SubstrateParams
from .solver import apply_dirichlet_conditions, build_workspaces, diffuse_decay_step

TEMPORAL_BAND = (0.8, 1.2)
SPATIAL_BAND = (1.7, 2.3)


def analytic_solution_1d(x, t, D, L, k=1):
    """``1 + cos(k pi x / L) exp(-D (k pi / L)^2 t)``.

    Exact solution of ``rho_t = D rho_xx`` on ``[0, L]`` with zero-flux
    ends; works elementwise on arrays.
    """
    w = k * math.pi / L
    return 1.0 + np.cos(w * np.asarray(x, dtype=np.float64)) * np.exp(-D * w * w * t)


@dataclass
class ConvergenceReport:
    refine: str
    steps: list[float]
    errors: list[float]
    order: float
    band: tuple[float, float]
    passed: bool

    def __post_init__(self):
        if len(self.errors) < 3:
            raise ValueError("a convergence report needs at least 3 levels")

    @property
    def label(self) -> str:
        return "dt" if self.refine == "temporal" else "dx"

    def format(self) -> str:
        lines = [f"{self.refine} refinement: {self.label}, linf_error"]
        lines += [f"  {h:.6g}, {e:.6e}" for h, e in zip(self.steps, self.errors)]
        lo, hi = self.band
        lines.append(f"  fitted order {self.order:.4f} (band [{lo}, {hi}]) "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def fit_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log2(error) against log2(step)."""
    h = np.log2(np.asarray(steps, dtype=np.float64))
    e = np.log2(np.asarray(errors, dtype=np.float64))
    return float(np.polyfit(h, e, 1)[0])


def _cosine_error(nx: int, dt: float, L: float, D: float, T: float, k: int) -> float:
    """l-inf error over t = T/4, T/2, T of the numerical cosine-mode solution."""
    h = L / nx
    mesh = CartesianMesh(0.0, L, 0.0, h, 0.0, h, h, h, h)
    x = mesh.centers(0)
    rho = DensityField(analytic_solution_1d(x, 0.0, D, L, k), 1, mesh.shape)
    ws = build_workspaces(mesh, [SubstrateParams("u", D, 0.0)], dt)
    err = 0.0
    steps_done = 0
    with select_backend(BackendKind.serial()) as strategy:
        for t in (T / 4, T / 2, T):
            target = round(t / dt)
            if abs(target * dt - t) > 1e-9 * t:
                raise ValueError(f"dt={dt} does not divide sample time {t}")
            while steps_done < target:
                diffuse_decay_step(rho, ws, None, strategy)
                steps_done += 1
            exact = analytic_solution_1d(x, t, D, L, k)
            err = max(err, float(np.max(np.abs(rho.values - exact))))
    return err


def run_convergence_test(refine: str = "temporal", levels: int = 5, *, L: float = 2000.0,
                         D: float = 1000.0, T: float = 10.0, k: int = 1,
                         nx_fine: int = 1000, dt_coarse: float | None = None,
                         nx_coarse: int = 10, dt_fine: float = 1e-3) -> ConvergenceReport:
    """Refine dt (at ``nx_fine`` voxels) or dx (at ``dt_fine``) and fit the error order."""
    if levels < 3:
        raise ValueError(f"need at least 3 refinement levels, got {levels}")
    if refine == "temporal":
        dt0 = T / 4 if dt_coarse is None else dt_coarse
        steps = [dt0 / 2 ** l for l in range(levels)]
        errors = [_cosine_error(nx_fine, dt, L, D, T, k) for dt in steps]
        band = TEMPORAL_BAND
    elif refine == "spatial":
        counts = [nx_coarse * 2 ** l for l in range(levels)]
        steps = [L / n for n in counts]
        errors = [_cosine_error(n, dt_fine, L, D, T, k) for n in counts]
        band = SPATIAL_BAND
    else:
        raise ValueError(f"refine must be 'temporal' or 'spatial', got {refine!r}")
    if max(errors) <= 1e-13:
        # stationary solution (D = 0): exact at every level
        order, passed = float("nan"), True
    else:
        order = fit_order(steps, errors)
        passed = band[0] <= order <= band[1]
    return ConvergenceReport(refine, steps, errors, order, band, passed)


@dataclass
class CrossCheckReport:
    max_abs: float
    max_rel: float
    worst_index: int
    worst_voxel: int
    worst_substrate: int
    abs_tol: float
    rel_tol: float
    passed: bool

    def format(self) -> str:
        return (f"cross-check {'PASS' if self.passed else 'FAIL'}: max |a-b| = {self.max_abs:.6e}, "
                f"max rel = {self.max_rel:.6e}, worst voxel {self.worst_voxel} substrate "
                f"{self.worst_substrate} (abs_tol={self.abs_tol:g}, rel_tol={self.rel_tol:g})")


def cross_check(a: DensityField, b: DensityField, abs_tol: float = 0.0,
                rel_tol: float = 0.0) -> CrossCheckReport:
    """Compare every voxel and substrate: pass iff ``|a-b| <= abs_tol + rel_tol*max(|a|,|b|)``."""
    if a.shape != b.shape or a.n_substrates != b.n_substrates:
        raise ValueError(f"field shapes differ: {a.shape}x{a.n_substrates} vs {b.shape}x{b.n_substrates}")
    x, y = a.values, b.values
    diff = np.abs(x - y)
    scale = np.maximum(np.abs(x), np.abs(y))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    excess = diff - (abs_tol + rel_tol * scale)
    worst = int(np.argmax(excess)) if excess.size else 0
    if diff.size and diff[worst] == 0 and diff.max() > 0:
        worst = int(np.argmax(diff))
    passed = bool(np.all(excess <= 0)) and bool(np.all(np.isfinite(x) == np.isfinite(y)))
    S = a.n_substrates
    return CrossCheckReport(float(diff.max(initial=0.0)), float(rel.max(initial=0.0)), worst,
                            worst // S, worst % S, abs_tol, rel_tol, passed)


def _format_value(v: float) -> str:
    return repr(float(v))


def snapshot_slice(field: DensityField, substrate: int, z_slice: int) -> np.ndarray:
    nx, ny, nz = field.shape
    if not 0 <= substrate < field.n_substrates:
        raise ValueError(f"substrate {substrate} out of range [0, {field.n_substrates})")
    if not 0 <= z_slice < nz:
        raise ValueError(f"z slice {z_slice} out of range [0, {nz})")
    return field.grid()[z_slice, :, :, substrate]


def graymap_levels(plane: np.ndarray) -> np.ndarray:
    """Min-max normalise to 0..255; a constant plane maps to 128."""
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 128, dtype=np.int64)
    return np.rint(255.0 * (plane - lo) / (hi - lo)).astype(np.int64)


def render_snapshot(field: DensityField, substrate: int, z_slice: int, out) -> list[Path]:
    """Write the slice as an ASCII graymap (``.pgm``) and a value table (``.csv``).

    ``out`` is a path stem or a ``(pgm_path, csv_path)`` pair.  Table rows
    are y indices and columns x indices; values are written with ``repr``
    so the files are byte-identical for identical fields.
    """
    plane = snapshot_slice(field, substrate, z_slice)
    if isinstance(out, (tuple, list)):
        pgm_path, csv_path = (Path(p) for p in out)
    else:
        stem = Path(out)
        pgm_path, csv_path = stem.with_name(stem.name + ".pgm"), stem.with_name(stem.name + ".csv")
    nx, ny, nz = field.shape
    levels = graymap_levels(plane)
    pgm = [f"P2\n{nx} {ny}\n255\n"]
    pgm += [" ".join(str(int(p)) for p in row) + "\n" for row in levels]
    csv = [f"# nx={nx} ny={ny} nz={nz} S={field.n_substrates} substrate={substrate} z_slice={z_slice}\n"]
    csv += [",".join(_format_value(v) for v in row) + "\n" for row in plane]
    pgm_path.write_text("".join(pgm))
    csv_path.write_text("".join(csv))
    return [pgm_path, csv_path]


def read_snapshot_table(path) -> tuple[dict, np.ndarray]:
    """Parse a table written by :func:`render_snapshot` into ``(header, values)``."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing snapshot header")
        meta = {}
        for item in header[1:].split():
            key, _, value = item.partition("=")
            meta[key] = int(value)
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, values


def read_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not an ASCII graymap")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)


def table_diff(path_a, path_b) -> int:
    """Number of differing cells between two snapshot tables (-1 on header mismatch)."""
    meta_a, a = read_snapshot_table(path_a)
    meta_b, b = read_snapshot_table(path_b)
    if meta_a != meta_b or a.shape != b.shape:
        return -1
    return int(np.count_nonzero(a != b))


def off_by_one_dirichlet(field: DensityField, dirichlet) -> DensityField:
    """Deliberately faulty clamp: writes each entry to the next voxel index."""
    if len(dirichlet) == 0:
        return field
    voxels, mask, values = dirichlet.packed()
    rho = field.per_voxel()
    shifted = (voxels + 1) % field.n_voxels
    block = rho[shifted]
    np.copyto(block, values, where=mask)
    rho[shifted] = block
    return field


def _mutant_scenario(n: int) -> Microenvironment:
    mesh = CartesianMesh.from_counts(n, n, n, 20.0)
    env = Microenvironment(mesh, [SubstrateParams("oxygen", 1000.0, 0.1, 0.0)])
    # Dirichlet source on the x_min face only, so a shifted clamp leaks into the interior
    nx, ny, nz = mesh.shape
    for k in range(nz):
        for j in range(ny):
            env.dirichlet.set_value(j * nx + k * nx * ny, 0, 38.0)
    return env


def _run_scenario(n: int, steps: int, backend: BackendKind, apply_dirichlet) -> DensityField:
    env = _mutant_scenario(n)
    ws = build_workspaces(env.mesh, env.substrates, 0.01)
    apply_dirichlet(env.density, env.dirichlet)
    with select_backend(backend) as strategy:
        for _ in range(steps):
            diffuse_decay_step(env.density, ws, env.dirichlet, strategy, apply_dirichlet)
    return env.density


@dataclass
class MutantReport:
    clean: CrossCheckReport
    mutant: CrossCheckReport
    clean_table_diff: int
    mutant_table_diff: int
    files: list[Path] = field(default_factory=list)

    @property
    def clean_passes(self) -> bool:
        return self.clean.passed and self.clean_table_diff == 0

    @property
    def crosscheck_detects(self) -> bool:
        return not self.mutant.passed

    @property
    def snapshot_detects(self) -> bool:
        return self.mutant_table_diff != 0

    @property
    def passed(self) -> bool:
        return self.clean_passes and self.crosscheck_detects and self.snapshot_detects

    def format(self) -> str:
        return "\n".join([
            f"unmutated build: {self.clean.format()}; snapshot table cells differing: {self.clean_table_diff}",
            f"mutant build:    {self.mutant.format()}; snapshot table cells differing: {self.mutant_table_diff}",
            f"mutant detected by cross-check: {self.crosscheck_detects}, by snapshot diff: "
            f"{self.snapshot_detects}; unmutated build clean: {self.clean_passes}",
            f"snapshot-mutant {'PASS' if self.passed else 'FAIL'}",
        ])


def run_mutant_detection(out_dir, n: int = 16, steps: int = 100, workers: int = 4,
                         mutant=off_by_one_dirichlet) -> MutantReport:
    """Run reference, second reference (parallel backend) and mutant builds.

    The references must agree bitwise and give identical snapshot tables;
    the mutant must fail the cross-check and change the snapshot table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ref = _run_scenario(n, steps, BackendKind.serial(), apply_dirichlet_conditions)
    twin = _run_scenario(n, steps, BackendKind.parallel(workers), apply_dirichlet_conditions)
    bad = _run_scenario(n, steps, BackendKind.serial(), mutant)
    z = n // 2
    files = []
    for label, f in (("reference", ref), ("twin", twin), ("mutant", bad)):
        files += render_snapshot(f, 0, z, out_dir / label)
    tables = {p.stem: p for p in files if p.suffix == ".csv"}
    return MutantReport(
        clean=cross_check(ref, twin, 0.0, 0.0),
        mutant=cross_check(ref, bad, 1e-9, 1e-9),
        clean_table_diff=table_diff(tables["reference"], tables["twin"]),
        mutant_table_diff=table_diff(tables["reference"], tables["mutant"]),
        files=files,
    )


def crosscheck_config(n: int = 16, n_substrates: int = 2, n_agents: int = 10,
                      steps: int = 100, seed: int = 3):
    """Small mixed workload: Dirichlet boundary, decay and secreting/consuming agents."""
    from .config import AgentRates, AgentSource, SimConfig, SubstrateConfig

    half = n * 20.0 / 2
    subs, rates = [], {}
    for s in range(n_substrates):
        name = f"substrate{s}"
        subs.append(SubstrateConfig(name, 1000.0 * (s + 1), 0.1 * s, 10.0 * s,
                                    38.0 if s == 0 else None))
        rates[name] = AgentRates(secretion=float(s), uptake=10.0 if s == 0 else 1.0,
                                 target=20.0 * s)
    return SimConfig(-half, half, -half, half, -half, half, max_time=steps * 0.01,
                     substrates=subs, snapshot_interval=0.0,
                     agents=AgentSource(count=n_agents, placement="random", seed=seed,
                                        rates=rates)).validate()


def backend_crosscheck(config, workers: int = 8) -> CrossCheckReport:
    """Run ``config`` on the serial and parallel(workers) backends; compare bitwise."""
    from .engine import run_simulation

    _, a = run_simulation(config, backend=BackendKind.serial())
    _, b = run_simulation(config, backend=BackendKind.parallel(workers))
    return cross_check(a, b, 0.0, 0.0)
