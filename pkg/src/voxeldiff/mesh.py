"""Cartesian voxel mesh, substrate density storage and layout translation.

Densities live in one flat float64 array, voxel-major, with the ``S``
substrate values of a voxel stored contiguously.  Voxel ``(i, j, k)`` has
flat index ``i + j*nx + k*nx*ny``, so the array reshapes without copying to
``(nz, ny, nx, S)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BoundsError, DomainError, LayoutError


@dataclass(frozen=True)
class CartesianMesh:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float
    dx: float = 20.0
    dy: float = 20.0
    dz: float = 20.0

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for axis, n in zip("xyz", (self.nx, self.ny, self.nz)):
            if n < 1:
                raise ValueError(f"{axis} extent holds no voxels")

    @classmethod
    def cube(cls, lo: float, hi: float, h: float) -> "CartesianMesh":
        return cls(lo, hi, lo, hi, lo, hi, h, h, h)

    @classmethod
    def from_counts(cls, nx: int, ny: int, nz: int, h: float = 20.0,
                    origin: float = 0.0) -> "CartesianMesh":
        """Mesh with the given voxel counts and uniform spacing ``h``."""
        return cls(origin, origin + nx * h, origin, origin + ny * h,
                   origin, origin + nz * h, h, h, h)

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def ny(self) -> int:
        return int(round((self.y_max - self.y_min) / self.dy))

    @property
    def nz(self) -> int:
        return int(round((self.z_max - self.z_min) / self.dz))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def voxel_volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def dims(self) -> int:
        """2 for a single z layer, else 3."""
        return 2 if self.nz == 1 else 3

    def spacing(self, axis: int) -> float:
        return (self.dx, self.dy, self.dz)[axis]

    def centers(self, axis: int) -> np.ndarray:
        lo = (self.x_min, self.y_min, self.z_min)[axis]
        h = self.spacing(axis)
        n = self.shape[axis]
        return lo + (np.arange(n) + 0.5) * h

    def voxel_center(self, n: int) -> np.ndarray:
        i, j, k = voxel_coords(n, self)
        return np.array([self.x_min + (i + 0.5) * self.dx,
                         self.y_min + (j + 0.5) * self.dy,
                         self.z_min + (k + 0.5) * self.dz])


def voxel_index(i: int, j: int, k: int, mesh: CartesianMesh) -> int:
    nx, ny, nz = mesh.shape
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise BoundsError(f"voxel ({i}, {j}, {k}) outside {nx}x{ny}x{nz} mesh")
    return i + j * nx + k * nx * ny


def voxel_coords(n: int, mesh: CartesianMesh) -> tuple[int, int, int]:
    """Inverse of :func:`voxel_index`."""
    nx, ny, _ = mesh.shape
    if not 0 <= n < mesh.n_voxels:
        raise BoundsError(f"voxel {n} outside mesh of {mesh.n_voxels} voxels")
    k, rem = divmod(n, nx * ny)
    j, i = divmod(rem, nx)
    return i, j, k


def nearest_voxel(position: Sequence[float], mesh: CartesianMesh) -> int:
    """Flat index of the voxel containing ``position``.

    Points on the upper face of the domain are assigned to the last voxel
    along that axis.
    """
    x, y, z = (float(p) for p in position)
    idx = []
    for v, lo, hi, h, n, axis in zip(
        (x, y, z),
        (mesh.x_min, mesh.y_min, mesh.z_min),
        (mesh.x_max, mesh.y_max, mesh.z_max),
        (mesh.dx, mesh.dy, mesh.dz),
        mesh.shape,
        "xyz",
    ):
        if not (lo <= v <= hi):
            raise DomainError(f"{axis}={v} outside domain [{lo}, {hi}]")
        idx.append(min(int((v - lo) // h), n - 1))
    return idx[0] + idx[1] * mesh.nx + idx[2] * mesh.nx * mesh.ny


@dataclass
class DensityField:
    """Flat voxel-major density array for ``n_substrates`` substrates."""

    values: np.ndarray
    n_substrates: int
    shape: tuple[int, int, int]

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise LayoutError("density values must be a flat array")
        self.shape = tuple(int(s) for s in self.shape)
        expected = self.n_voxels * self.n_substrates
        if self.values.size != expected:
            raise LayoutError(
                f"expected {expected} values for {self.shape} voxels x "
                f"{self.n_substrates} substrates, got {self.values.size}")

    @classmethod
    def zeros(cls, mesh: CartesianMesh, n_substrates: int) -> "DensityField":
        return cls(np.zeros(mesh.n_voxels * n_substrates), n_substrates, mesh.shape)

    @classmethod
    def uniform(cls, mesh: CartesianMesh, initial: Sequence[float]) -> "DensityField":
        init = np.asarray(initial, dtype=np.float64)
        return cls(np.tile(init, mesh.n_voxels), init.size, mesh.shape)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def grid(self) -> np.ndarray:
        """Writable ``(nz, ny, nx, S)`` view of the values."""
        nx, ny, nz = self.shape
        return self.values.reshape(nz, ny, nx, self.n_substrates)

    def per_voxel(self) -> np.ndarray:
        """Writable ``(n_voxels, S)`` view of the values."""
        return self.values.reshape(self.n_voxels, self.n_substrates)

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy(), self.n_substrates, self.shape)

    def total(self, voxel_volume: float = 1.0) -> np.ndarray:
        """Per-substrate total amount (sum of densities times voxel volume)."""
        return self.per_voxel().sum(axis=0) * voxel_volume


def translate_vector_to_array(nested: Sequence[Sequence[float]],
                              shape: tuple[int, int, int] | None = None) -> DensityField:
    """Pack a per-voxel list of substrate lists into a flat :class:`DensityField`.

    ``shape`` defaults to ``(len(nested), 1, 1)``.
    """
    n_vox = len(nested)
    if n_vox == 0:
        raise LayoutError("nested density holds no voxels")
    n_sub = len(nested[0])
    if n_sub == 0:
        raise LayoutError("voxel 0 holds no substrate values")
    for n, inner in enumerate(nested):
        if len(inner) != n_sub:
            raise LayoutError(f"voxel {n} holds {len(inner)} substrates, expected {n_sub}")
    if shape is None:
        shape = (n_vox, 1, 1)
    if shape[0] * shape[1] * shape[2] != n_vox:
        raise LayoutError(f"shape {shape} does not hold {n_vox} voxels")
    flat = np.empty(n_vox * n_sub, dtype=np.float64)
    for n, inner in enumerate(nested):
        flat[n * n_sub:(n + 1) * n_sub] = inner
    return DensityField(flat, n_sub, shape)


def translate_array_to_vector(field: DensityField) -> list[list[float]]:
    """Unpack a :class:`DensityField` into a per-voxel list of substrate lists."""
    return field.per_voxel().tolist()


@dataclass
class SubstrateParams:
    name: str
    diffusion_coefficient: float
    decay_rate: float
    initial_condition: float = 0.0

    def __post_init__(self):
        if not self.diffusion_coefficient >= 0:
            raise ValueError(f"{self.name}: diffusion coefficient must be >= 0")
        if not self.decay_rate >= 0:
            raise ValueError(f"{self.name}: decay rate must be >= 0")


class DirichletMap:
    """Voxels whose masked substrates are clamped to fixed values.

    Entries are kept sorted by voxel index; ``mask`` and ``values`` are
    ``(n_entries, S)`` arrays aligned with ``voxels``.
    """

    def __init__(self, n_voxels: int, n_substrates: int):
        self.n_voxels = int(n_voxels)
        self.n_substrates = int(n_substrates)
        self._entries: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._packed = None

    def __len__(self):
        return len(self._entries)

    def __contains__(self, voxel):
        return int(voxel) in self._entries

    def add(self, voxel: int, mask: Sequence[bool], values: Sequence[float]) -> None:
        voxel = int(voxel)
        if not 0 <= voxel < self.n_voxels:
            raise BoundsError(f"Dirichlet voxel {voxel} outside mesh of {self.n_voxels} voxels")
        if voxel in self._entries:
            raise ValueError(f"duplicate Dirichlet voxel {voxel}")
        mask = np.asarray(mask, dtype=bool)
        values = np.asarray(values, dtype=np.float64)
        if mask.shape != (self.n_substrates,) or values.shape != (self.n_substrates,):
            raise LayoutError(f"Dirichlet mask/values must have length {self.n_substrates}")
        self._entries[voxel] = (mask.copy(), values.copy())
        self._packed = None

    def set_value(self, voxel: int, substrate: int, value: float) -> None:
        """Enable the clamp for one substrate of an existing or new entry."""
        voxel = int(voxel)
        if voxel not in self._entries:
            self.add(voxel, np.zeros(self.n_substrates, bool), np.zeros(self.n_substrates))
        mask, values = self._entries[voxel]
        mask[substrate] = True
        values[substrate] = value
        self._packed = None

    def remove(self, voxel: int) -> None:
        del self._entries[int(voxel)]
        self._packed = None

    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(voxels, mask, values)`` arrays sorted by voxel index."""
        if self._packed is None:
            voxels = np.array(sorted(self._entries), dtype=np.int64)
            mask = np.zeros((voxels.size, self.n_substrates), dtype=bool)
            values = np.zeros((voxels.size, self.n_substrates))
            for row, v in enumerate(voxels):
                mask[row], values[row] = self._entries[int(v)]
            self._packed = (voxels, mask, values)
        return self._packed

    def items(self):
        voxels, mask, values = self.packed()
        for row, v in enumerate(voxels):
            yield int(v), mask[row], values[row]


def boundary_voxels(mesh: CartesianMesh) -> np.ndarray:
    """Sorted flat indices of voxels on the outer faces of the domain.

    In 2-D (``nz == 1``) only the x and y faces count as boundary.
    """
    nx, ny, nz = mesh.shape
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    on = (i == 0) | (i == nx - 1) | (j == 0) | (j == ny - 1)
    if nz > 1:
        on |= (k == 0) | (k == nz - 1)
    return np.flatnonzero(on.ravel())


@dataclass
class Microenvironment:
    """Mesh, substrate parameters, density state and Dirichlet clamps."""

    mesh: CartesianMesh
    substrates: list[SubstrateParams]
    density: DensityField = None
    dirichlet: DirichletMap = None
    names: list[str] = field(init=False)

    def __post_init__(self):
        self.names = [s.name for s in self.substrates]
        if len(set(self.names)) != len(self.names):
            raise ValueError("substrate names must be unique")
        if self.density is None:
            self.density = DensityField.uniform(
                self.mesh, [s.initial_condition for s in self.substrates])
        if self.density.shape != self.mesh.shape or self.density.n_substrates != self.n_substrates:
            raise LayoutError("density field does not match mesh and substrates")
        if self.dirichlet is None:
            self.dirichlet = DirichletMap(self.mesh.n_voxels, self.n_substrates)

    @property
    def n_substrates(self) -> int:
        return len(self.substrates)

    def substrate_index(self, name: str) -> int:
        return self.names.index(name)

    def set_boundary_dirichlet(self, substrate: int, value: float) -> None:
        for v in boundary_voxels(self.mesh):
            self.dirichlet.set_value(v, substrate, value)
