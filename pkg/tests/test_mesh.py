import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxeldiff.errors import BoundsError, DomainError, LayoutError
from voxeldiff.mesh import (CartesianMesh, DensityField, DirichletMap, Microenvironment,
                            SubstrateParams, boundary_voxels, nearest_voxel,
                            translate_array_to_vector, translate_vector_to_array, voxel_coords,
                            voxel_index)


def test_mesh_counts_and_volume():
    m = CartesianMesh.cube(-1000, 1000, 20)
    assert m.shape == (100, 100, 100)
    assert m.n_voxels == 10**6
    assert m.voxel_volume == 8000.0
    assert m.dims == 3
    assert CartesianMesh.from_counts(5, 4, 1).dims == 2


@pytest.mark.parametrize("kw", [{"dx": 0}, {"dy": -1.0}])
def test_mesh_rejects_bad_spacing(kw):
    with pytest.raises(ValueError):
        CartesianMesh(0, 100, 0, 100, 0, 100, **kw)


def test_voxel_index_examples():
    m10 = CartesianMesh.from_counts(10, 10, 10)
    assert voxel_index(0, 0, 0, CartesianMesh.from_counts(3, 7, 2)) == 0
    assert voxel_index(1, 0, 0, m10) == 1
    assert voxel_index(0, 1, 0, m10) == 10
    assert voxel_index(0, 0, 1, m10) == 100


def test_voxel_index_bijection_exhaustive():
    m = CartesianMesh.from_counts(7, 5, 3)
    seen = set()
    for k, j, i in itertools.product(range(3), range(5), range(7)):
        n = voxel_index(i, j, k, m)
        assert voxel_coords(n, m) == (i, j, k)
        seen.add(n)
    assert seen == set(range(105))
    for n in range(105):
        assert voxel_index(*voxel_coords(n, m), m) == n


@pytest.mark.parametrize("ijk", [(-1, 0, 0), (7, 0, 0), (0, 5, 0), (0, 0, 3)])
def test_voxel_index_out_of_range(ijk):
    with pytest.raises(BoundsError):
        voxel_index(*ijk, CartesianMesh.from_counts(7, 5, 3))


def test_nearest_voxel_center_and_corner():
    m = CartesianMesh.cube(-110, 110, 20)  # 11^3, odd
    assert nearest_voxel((0.0, 0.0, 0.0), m) == voxel_index(5, 5, 5, m)
    assert nearest_voxel((-110, -110, -110), m) == 0


def test_nearest_voxel_upper_face_clamps():
    m = CartesianMesh.from_counts(4, 3, 2)
    assert nearest_voxel((80.0, 60.0, 40.0), m) == m.n_voxels - 1


@pytest.mark.parametrize("pos", [(-0.1, 5, 5), (5, 60.01, 5), (5, 5, 1e6)])
def test_nearest_voxel_outside(pos):
    with pytest.raises(DomainError):
        nearest_voxel(pos, CartesianMesh.from_counts(4, 3, 2))


def _box_scan(p, mesh):
    """Brute force: the unique voxel box [lo, lo+h) containing p (upper face -> last)."""
    hits = []
    for n in range(mesh.n_voxels):
        i, j, k = voxel_coords(n, mesh)
        inside = True
        for v, lo, h, idx, count in zip(p, (mesh.x_min, mesh.y_min, mesh.z_min),
                                        (mesh.dx, mesh.dy, mesh.dz), (i, j, k), mesh.shape):
            a, b = lo + idx * h, lo + (idx + 1) * h
            if not (a <= v < b or (idx == count - 1 and v == b)):
                inside = False
                break
        if inside:
            hits.append(n)
    assert len(hits) == 1
    return hits[0]


def test_nearest_voxel_matches_box_scan(rng):
    m = CartesianMesh(-50, 70, 0, 90, 10, 50, 20, 15, 10)
    lo = np.array([m.x_min, m.y_min, m.z_min])
    hi = np.array([m.x_max, m.y_max, m.z_max])
    pts = lo + rng.random((1000, 3)) * (hi - lo)
    for p in pts:
        assert nearest_voxel(p, m) == _box_scan(p, m)


def test_translate_examples():
    f = translate_vector_to_array([[3.0]])
    assert f.values.tolist() == [3.0]
    f = translate_vector_to_array([[1, 2], [3, 4]])
    assert f.values.tolist() == [1, 2, 3, 4]
    assert translate_array_to_vector(DensityField(np.array([3.0]), 1, (1, 1, 1))) == [[3.0]]
    assert translate_array_to_vector(DensityField(np.array([1.0, 2, 3, 4]), 2, (2, 1, 1))) == [[1, 2], [3, 4]]


def test_translate_round_trip_4x3x2(rng):
    nested = rng.random((24, 3)).tolist()
    f = translate_vector_to_array(nested, (4, 3, 2))
    assert translate_array_to_vector(f) == nested


def test_translate_rejects_ragged():
    with pytest.raises(LayoutError):
        translate_vector_to_array([[1.0, 2.0], [3.0]])
    with pytest.raises(LayoutError):
        translate_vector_to_array([[1.0]], (2, 1, 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(1, 4), st.data())
def test_translate_round_trip_property(nx, ny, nz, S, data):
    n = nx * ny * nz
    vals = data.draw(st.lists(st.floats(-1e6, 1e6), min_size=n * S, max_size=n * S))
    nested = [vals[v * S:(v + 1) * S] for v in range(n)]
    f = translate_vector_to_array(nested, (nx, ny, nz))
    assert f.values.size == n * S
    assert translate_array_to_vector(f) == nested
    g = translate_vector_to_array(translate_array_to_vector(f), (nx, ny, nz))
    assert np.array_equal(g.values, f.values)


def test_density_field_layout():
    m = CartesianMesh.from_counts(3, 2, 2)
    f = DensityField.zeros(m, 2)
    n = voxel_index(2, 1, 1, m)
    f.values[n * 2 + 1] = 7.0
    assert f.grid()[1, 1, 2, 1] == 7.0
    assert f.per_voxel()[n, 1] == 7.0
    with pytest.raises(LayoutError):
        DensityField(np.zeros(5), 2, m.shape)


def test_dirichlet_map_validation():
    d = DirichletMap(10, 2)
    d.add(3, [True, False], [5.0, 9.0])
    with pytest.raises(ValueError):
        d.add(3, [True, True], [1.0, 1.0])
    with pytest.raises(BoundsError):
        d.add(10, [True, True], [1.0, 1.0])
    with pytest.raises(LayoutError):
        d.add(4, [True], [1.0])
    d.set_value(1, 1, 2.5)
    voxels, mask, values = d.packed()
    assert voxels.tolist() == [1, 3]
    assert mask.tolist() == [[False, True], [True, False]]
    assert values[0, 1] == 2.5


def test_substrate_params_invariants():
    with pytest.raises(ValueError):
        SubstrateParams("a", -1.0, 0.0)
    with pytest.raises(ValueError):
        SubstrateParams("a", 1.0, -0.1)


def test_boundary_voxels_2d_and_3d():
    m3 = CartesianMesh.from_counts(4, 4, 4)
    assert boundary_voxels(m3).size == 4**3 - 2**3
    m2 = CartesianMesh.from_counts(5, 4, 1)
    assert boundary_voxels(m2).size == 5 * 4 - 3 * 2


def test_microenvironment_boundary_dirichlet(two_substrates):
    m = CartesianMesh.from_counts(4, 4, 4)
    env = Microenvironment(m, two_substrates)
    assert np.all(env.density.per_voxel() == [38.0, 0.0])
    env.set_boundary_dirichlet(1, 3.0)
    assert len(env.dirichlet) == 56
    _, mask, values = env.dirichlet.packed()
    assert mask[:, 1].all() and not mask[:, 0].any()
