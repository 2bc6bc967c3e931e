import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxeldiff.agents import (CellAgent, SourceTable, cell_sources_sinks_step,
                              make_population, rebuild_voxel_grouping, steady_state_density)
from voxeldiff.backend import BackendKind
from voxeldiff.errors import StateError
from voxeldiff.mesh import CartesianMesh, DensityField, nearest_voxel


def agent(i, pos, S=(1.0,), U=(0.0,), T=(38.0,), V=1000.0):
    return CellAgent(i, pos, V, S, U, T)


def reference_update(rho, a, dt, vv):
    f = a.volume / vv
    return (rho + dt * f * a.secretion_rates * a.saturation_densities) / (
        1 + dt * f * (a.secretion_rates + a.uptake_rates))


def test_agent_validation():
    with pytest.raises(ValueError):
        agent(0, (0, 0, 0), V=0.0)
    with pytest.raises(ValueError):
        agent(0, (0, 0, 0), S=(-1.0,))
    with pytest.raises(ValueError):
        CellAgent(0, (0, 0, 0), 1.0, [1.0, 2.0], [1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        agent(0, (0, 0))


def test_single_step_closed_form():
    mesh = CartesianMesh.from_counts(3, 3, 3)
    a = agent(4, (30, 30, 30), S=(2.0,), U=(0.5,), T=(10.0,), V=4000.0)
    pop = make_population([a], mesh)
    f = DensityField.uniform(mesh, [3.0])
    cell_sources_sinks_step(f, pop, mesh, 0.1)
    frac = 4000.0 / 8000.0
    want = (3.0 + 0.1 * frac * 2.0 * 10.0) / (1 + 0.1 * frac * 2.5)
    v = nearest_voxel((30, 30, 30), mesh)
    assert f.per_voxel()[v, 0] == pytest.approx(want, rel=1e-15)
    others = np.delete(f.per_voxel()[:, 0], v)
    assert np.all(others == 3.0)


def test_same_voxel_agents_applied_in_id_order():
    mesh = CartesianMesh.from_counts(2, 2, 2)
    a = agent(7, (5, 5, 5), S=(3.0,), U=(0.0,), T=(50.0,))
    b = agent(2, (6, 6, 6), S=(0.0,), U=(4.0,), T=(0.0,))
    pop = make_population([a, b], mesh)
    assert pop.groups == {0: [2, 7]}
    f = DensityField.uniform(mesh, [10.0])
    cell_sources_sinks_step(f, pop, mesh, 0.05)
    vv = mesh.voxel_volume
    want = reference_update(reference_update(np.array([10.0]), b, 0.05, vv), a, 0.05, vv)
    assert f.per_voxel()[0, 0] == want[0]
    # the list order of the population does not matter
    g = DensityField.uniform(mesh, [10.0])
    cell_sources_sinks_step(g, make_population([b, a], mesh), mesh, 0.05)
    assert np.array_equal(f.values, g.values)


def test_grouping_matches_bucket_sort(rng):
    mesh = CartesianMesh.from_counts(5, 4, 3)
    ids = rng.permutation(500)
    pos = rng.random((500, 3)) * [100, 80, 60]
    agents = [agent(int(i), p) for i, p in zip(ids, pos)]
    pop = make_population(agents, mesh)
    buckets = {}
    for i, p in zip(ids, pos):
        ijk = np.minimum((p // 20).astype(int), [4, 3, 2])
        v = ijk[0] + 5 * ijk[1] + 20 * ijk[2]
        buckets.setdefault(int(v), []).append(int(i))
    assert list(pop.groups) == sorted(buckets)
    for v, members in buckets.items():
        assert pop.groups[v] == sorted(members)


def test_duplicate_ids_rejected():
    mesh = CartesianMesh.from_counts(2, 2, 2)
    with pytest.raises(ValueError):
        make_population([agent(1, (1, 1, 1)), agent(1, (2, 2, 2))], mesh)


def test_stale_grouping_detected():
    mesh = CartesianMesh.from_counts(3, 3, 3)
    pop = make_population([agent(0, (1, 1, 1))], mesh)
    pop.agents[0].voxel = 5
    with pytest.raises(StateError):
        SourceTable(pop, mesh, 0.01, 1)
    rebuild_voxel_grouping(pop, mesh)
    with pytest.raises(StateError):
        SourceTable(pop, mesh, 0.01, 2)


def test_requires_mesh_and_dt():
    mesh = CartesianMesh.from_counts(2, 2, 2)
    with pytest.raises(ValueError):
        cell_sources_sinks_step(DensityField.zeros(mesh, 1), make_population([], mesh))


def test_steady_state_density():
    np.testing.assert_allclose(steady_state_density([1.0], [1.0], [38.0]), [19.0])
    assert np.isnan(steady_state_density([0.0], [0.0], [5.0])[0])


def test_fixed_point_is_invariant():
    mesh = CartesianMesh.from_counts(2, 2, 2)
    a = agent(0, (1, 1, 1), S=(1.5,), U=(0.5,), T=(40.0,), V=8000.0)
    f = DensityField.uniform(mesh, [30.0])
    cell_sources_sinks_step(f, make_population([a], mesh), mesh, 0.3)
    assert f.per_voxel()[0, 0] == pytest.approx(30.0, rel=1e-15)


def test_parallel_matches_serial_bitwise(rng):
    mesh = CartesianMesh.from_counts(6, 6, 6)
    agents = [CellAgent(i, rng.random(3) * 120, rng.uniform(500, 4000), rng.random(2) * 3,
                        rng.random(2) * 3, rng.random(2) * 50) for i in range(300)]
    pop = make_population(agents, mesh)
    f0 = DensityField(rng.uniform(0, 40, mesh.n_voxels * 2), 2, mesh.shape)
    table = SourceTable(pop, mesh, 0.01, 2)
    a = cell_sources_sinks_step(f0.copy(), table, backend=BackendKind.serial())
    b = cell_sources_sinks_step(f0.copy(), table, backend=BackendKind.parallel(5))
    assert np.array_equal(a.values, b.values)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 100), st.floats(0, 10), st.floats(0, 10), st.floats(0, 100),
       st.floats(1e-3, 1.0), st.floats(10.0, 8000.0))
def test_update_moves_toward_fixed_point(rho0, S, U, T, dt, V):
    mesh = CartesianMesh.from_counts(1, 1, 2)
    a = CellAgent(0, (10, 10, 10), V, [S], [U], [T])
    f = DensityField.uniform(mesh, [rho0])
    cell_sources_sinks_step(f, make_population([a], mesh), mesh, dt)
    rho1 = f.values[0]
    assert rho1 >= 0
    if S + U > 0:
        star = S * T / (S + U)
        lo, hi = min(rho0, star), max(rho0, star)
        assert lo - 1e-12 * (1 + hi) <= rho1 <= hi + 1e-12 * (1 + hi)
    else:
        assert rho1 == rho0
    assert f.values[1] == rho0


def test_iterated_update_reaches_nineteen():
    mesh = CartesianMesh.from_counts(1, 1, 1)
    a = agent(0, (10, 10, 10), S=(1.0,), U=(1.0,), T=(38.0,), V=mesh.voxel_volume)
    table = SourceTable(make_population([a], mesh), mesh, 0.01, 1)
    f = DensityField.zeros(mesh, 1)
    for _ in range(6000):
        cell_sources_sinks_step(f, table)
    star = 1.0 * 38.0 / (1.0 + 1.0)
    assert star == 19.0
    assert abs(f.values[0] - star) <= 1e-9
