"""Implicit diffusion-decay step by locally one-dimensional Thomas sweeps.

Each diffusion step solves, axis by axis, the backward-Euler system

    (1 + dt*lam/dims) rho_i - dt*D/h^2 (rho_{i-1} - 2 rho_i + rho_{i+1}) = rho_i^old

with zero-flux end rows, then re-imposes Dirichlet clamps.  Coefficients
are uniform along a line, so the forward-elimination factors depend only on
(axis, substrate, dt) and are computed once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .backend import as_strategy
from .errors import LayoutError, StateError
from .mesh import CartesianMesh, DensityField, DirichletMap, SubstrateParams

AXES = {"x": 0, "y": 1, "z": 2}


def _axis_number(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"unknown axis {axis!r}")
    return int(axis)


@dataclass
class SolverWorkspace:
    """Tridiagonal coefficients and elimination factors for one axis.

    All arrays are ``(n, S)``.  ``sub``/``sup`` hold the off-diagonals
    (``sub[0]`` and ``sup[-1]`` are zero), ``diag`` the main diagonal,
    ``denom`` the reciprocals of the eliminated diagonal and ``cprime`` the
    eliminated super-diagonal.
    """

    axis: int
    dt: float
    dims: int
    spacing: float
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    denom: np.ndarray
    cprime: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def n_substrates(self) -> int:
        return self.diag.shape[1]

    def matrix(self, substrate: int) -> np.ndarray:
        """Dense tridiagonal matrix for one substrate."""
        s = substrate
        m = np.diag(self.diag[:, s])
        if self.n > 1:
            m += np.diag(self.sub[1:, s], -1) + np.diag(self.sup[:-1, s], 1)
        return m


def precompute_thomas_coefficients(mesh: CartesianMesh, params: Sequence[SubstrateParams],
                                   dt: float, axis, dims: int | None = None) -> SolverWorkspace:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    ax = _axis_number(axis)
    dims = mesh.dims if dims is None else dims
    if dims not in (2, 3):
        raise ValueError(f"dims must be 2 or 3, got {dims}")
    n = mesh.shape[ax]
    h = mesh.spacing(ax)
    D = np.array([p.diffusion_coefficient for p in params], dtype=np.float64)
    lam = np.array([p.decay_rate for p in params], dtype=np.float64)
    r = dt * D / (h * h)

    diag = np.empty((n, D.size))
    diag[:] = 1.0 + dt * lam / dims + 2.0 * r
    if n > 1:
        diag[0] = diag[-1] = 1.0 + dt * lam / dims + r
    else:
        diag[0] = 1.0 + dt * lam / dims
    sub = np.empty_like(diag)
    sub[:] = -r
    sub[0] = 0.0
    sup = np.empty_like(diag)
    sup[:] = -r
    sup[-1] = 0.0

    return tridiagonal_workspace(sub, diag, sup, axis=ax, dt=float(dt), dims=dims, spacing=h)


def tridiagonal_workspace(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray, axis: int = 0,
                          dt: float = 0.0, dims: int = 3, spacing: float = 1.0) -> SolverWorkspace:
    """Eliminate a general ``(n, S)`` tridiagonal system once, without pivoting.

    ``sub[0]`` and ``sup[-1]`` are ignored.  The system must be diagonally
    dominant (or otherwise safe to eliminate without pivoting).
    """
    diag = np.atleast_2d(np.asarray(diag, dtype=np.float64).T).T.copy()
    sub = np.asarray(sub, dtype=np.float64).reshape(diag.shape).copy()
    sup = np.asarray(sup, dtype=np.float64).reshape(diag.shape).copy()
    sub[0] = 0.0
    sup[-1] = 0.0
    n = diag.shape[0]
    denom = np.empty_like(diag)
    cprime = np.zeros_like(diag)
    denom[0] = 1.0 / diag[0]
    cprime[0] = sup[0] * denom[0]
    for i in range(1, n):
        denom[i] = 1.0 / (diag[i] - sub[i] * cprime[i - 1])
        cprime[i] = sup[i] * denom[i]
    assert np.all(np.isfinite(denom)) and np.all(denom != 0), "singular tridiagonal system"
    return SolverWorkspace(axis, dt, dims, spacing, sub, diag, sup, denom, cprime)


def build_workspaces(mesh: CartesianMesh, params: Sequence[SubstrateParams],
                     dt: float) -> list[SolverWorkspace]:
    """One workspace per swept axis: x, y in 2-D; x, y, z in 3-D."""
    dims = mesh.dims
    return [precompute_thomas_coefficients(mesh, params, dt, ax, dims) for ax in range(dims)]


def axpy(y: np.ndarray, a: np.ndarray, x: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """In place ``y += a*x`` (``sign=-1`` gives ``y -= a*x``); returns ``y``."""
    if not (len(y) == len(a) == len(x)):
        raise ValueError(f"length mismatch: {len(y)}, {len(a)}, {len(x)}")
    if sign >= 0:
        y += a * x
    else:
        y -= a * x
    return y


def naxpy(y: np.ndarray, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return axpy(y, a, x, sign=-1.0)


def thomas_solve(workspace: SolverWorkspace, rhs: np.ndarray) -> np.ndarray:
    """Solve one line in place.  ``rhs`` is ``(n, S)``; returns ``rhs``."""
    if rhs.shape != workspace.diag.shape:
        raise ValueError(f"line shape {rhs.shape} does not match workspace {workspace.diag.shape}")
    n = workspace.n
    rhs[0] *= workspace.denom[0]
    for i in range(1, n):
        naxpy(rhs[i], workspace.sub[i], rhs[i - 1])
        rhs[i] *= workspace.denom[i]
    for i in range(n - 2, -1, -1):
        naxpy(rhs[i], workspace.cprime[i], rhs[i + 1])
    return rhs


def _line_view(field: DensityField, axis: int) -> np.ndarray:
    """``(outer, n, m, S)`` view with y or z lines along axis 1."""
    nx, ny, nz = field.shape
    S = field.n_substrates
    v = field.values
    if axis == 1:
        return v.reshape(nz, ny, nx, S)
    return v.reshape(1, nz, ny * nx, S)


def diffusion_sweep(field: DensityField, workspace: SolverWorkspace, axis=None,
                    backend=None) -> DensityField:
    """Solve every grid line parallel to ``axis`` in place."""
    ax = workspace.axis if axis is None else _axis_number(axis)
    if ax != workspace.axis:
        raise StateError(f"workspace built for axis {workspace.axis}, sweep requested along {ax}")
    if field.shape[ax] != workspace.n or field.n_substrates != workspace.n_substrates:
        raise StateError("workspace does not match field mesh or substrate count")
    strategy, owned = as_strategy(backend)
    try:
        coeffs = (workspace.sub, workspace.denom, workspace.cprime)
        if ax == 0:
            d = field.grid()
            kernel = kernels.thomas_lines_x
        else:
            d = _line_view(field, ax)
            kernel = kernels.thomas_lines
        outer, m = d.shape[0], d.shape[2] if ax else d.shape[1]
        if outer >= strategy.workers:
            blocks = [(d, *coeffs, o0, o1, 0, m) for o0, o1 in strategy.chunks(outer)]
        else:
            blocks = [(d, *coeffs, 0, outer, p0, p1) for p0, p1 in strategy.chunks(m)]
        strategy.run(kernel, blocks)
    finally:
        if owned:
            strategy.close()
    return field


def apply_dirichlet_conditions(field: DensityField, dirichlet: DirichletMap) -> DensityField:
    if len(dirichlet) == 0:
        return field
    if dirichlet.n_voxels != field.n_voxels or dirichlet.n_substrates != field.n_substrates:
        raise LayoutError("Dirichlet map does not match field")
    voxels, mask, values = dirichlet.packed()
    rho = field.per_voxel()
    block = rho[voxels]
    np.copyto(block, values, where=mask)
    rho[voxels] = block
    return field


def diffuse_decay_step(field: DensityField, workspaces: Sequence[SolverWorkspace],
                       dirichlet: DirichletMap | None = None, backend=None,
                       apply_dirichlet=apply_dirichlet_conditions) -> DensityField:
    """Advance diffusion and decay by one step: x, y (, z) sweeps, then clamps.

    ``apply_dirichlet`` is the clamp routine; tests substitute faulty
    versions to check that validation catches them.
    """
    dims = len(workspaces)
    if dims not in (2, 3):
        raise StateError(f"expected 2 or 3 workspaces, got {dims}")
    dts = {w.dt for w in workspaces}
    if len(dts) != 1:
        raise StateError(f"workspaces built for different time steps: {sorted(dts)}")
    if any(w.dims != dims for w in workspaces):
        raise StateError("workspace decay split does not match the number of sweeps")
    strategy, owned = as_strategy(backend)
    try:
        for w in workspaces:
            diffusion_sweep(field, w, backend=strategy)
    finally:
        if owned:
            strategy.close()
    if dirichlet is not None:
        apply_dirichlet(field, dirichlet)
    return field
