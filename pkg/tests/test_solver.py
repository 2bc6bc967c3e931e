import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxeldiff.backend import BackendKind, ParallelStrategy, SerialStrategy
from voxeldiff.errors import StateError
from voxeldiff.mesh import CartesianMesh, DensityField, DirichletMap, SubstrateParams
from voxeldiff.solver import (apply_dirichlet_conditions, axpy, build_workspaces,
                              diffuse_decay_step, diffusion_sweep, naxpy,
                              precompute_thomas_coefficients, thomas_solve, tridiagonal_workspace)


def dense_operator(n, D, lam, h, dt, dims):
    """Backward-Euler matrix for one axis with zero-flux ends, assembled row by row."""
    r = dt * D / h**2
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = 1.0 + dt * lam / dims
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                A[i, i] += r
                A[i, j] -= r
    return A


@pytest.mark.parametrize("n", [1, 2, 3, 7])
@pytest.mark.parametrize("axis", [0, 1, 2])
def test_coefficients_match_dense_assembly(n, axis):
    counts = [4, 5, 6]
    counts[axis] = n
    mesh = CartesianMesh(0, counts[0] * 10.0, 0, counts[1] * 20.0, 0, counts[2] * 25.0, 10.0, 20.0, 25.0)
    params = [SubstrateParams("a", 1000.0, 0.3), SubstrateParams("b", 7.0, 0.0)]
    ws = precompute_thomas_coefficients(mesh, params, 0.01, axis)
    h = (10.0, 20.0, 25.0)[axis]
    for s, p in enumerate(params):
        want = dense_operator(n, p.diffusion_coefficient, p.decay_rate, h, 0.01, mesh.dims)
        np.testing.assert_allclose(ws.matrix(s), want, rtol=1e-15, atol=0)


def test_interior_row_example():
    # D=1000, h=20, dt=0.01, lam=0.1 in 3-D: r=0.025
    mesh = CartesianMesh.from_counts(5, 5, 5, 20.0)
    ws = precompute_thomas_coefficients(mesh, [SubstrateParams("o", 1000.0, 0.1)], 0.01, "x")
    r = 0.01 * 1000.0 / 400.0
    assert ws.diag[2, 0] == pytest.approx(1 + 0.01 * 0.1 / 3 + 2 * r, rel=1e-15)
    assert ws.diag[0, 0] == pytest.approx(1 + 0.01 * 0.1 / 3 + r, rel=1e-15)
    assert ws.sub[2, 0] == -r and ws.sup[2, 0] == -r


def test_two_dimensional_split_uses_half_decay():
    mesh = CartesianMesh.from_counts(6, 6, 1)
    wss = build_workspaces(mesh, [SubstrateParams("o", 0.0, 0.6)], 0.5)
    assert len(wss) == 2
    for ws in wss:
        assert np.all(ws.diag == 1 + 0.5 * 0.6 / 2)


def test_bad_dt_and_axis():
    mesh = CartesianMesh.from_counts(4, 4, 4)
    with pytest.raises(ValueError):
        precompute_thomas_coefficients(mesh, [SubstrateParams("a", 1.0, 0.0)], 0.0, "x")
    with pytest.raises(ValueError):
        precompute_thomas_coefficients(mesh, [SubstrateParams("a", 1.0, 0.0)], 0.1, "w")


def random_system(rng, n, S=1):
    sub = rng.uniform(-1, 1, (n, S))
    sup = rng.uniform(-1, 1, (n, S))
    sub[0] = 0
    sup[-1] = 0
    margin = rng.uniform(0.1, 2.0, (n, S))
    sign = rng.choice([-1.0, 1.0], (n, S))
    diag = sign * (np.abs(sub) + np.abs(sup) + margin)
    return sub, diag, sup


def test_thomas_matches_dense_solve(rng):
    for _ in range(50):
        n = int(rng.integers(1, 40))
        sub, diag, sup = random_system(rng, n, 2)
        ws = tridiagonal_workspace(sub, diag, sup)
        b = rng.normal(size=(n, 2))
        x = thomas_solve(ws, b.copy())
        for s in range(2):
            want = np.linalg.solve(ws.matrix(s), b[:, s])
            np.testing.assert_allclose(x[:, s], want, rtol=1e-11, atol=1e-12)


def test_thomas_known_system():
    ws = tridiagonal_workspace([0, 1, 1], [4, 4, 4], [1, 1, 0])
    x = thomas_solve(ws, np.array([[1.0], [1.0], [1.0]]))
    np.testing.assert_allclose(x[:, 0], [3 / 14, 1 / 7, 3 / 14], rtol=1e-15)


def test_thomas_shape_mismatch():
    ws = tridiagonal_workspace([0, 1, 1], [4, 4, 4], [1, 1, 0])
    with pytest.raises(ValueError):
        thomas_solve(ws, np.zeros((4, 1)))


def test_axpy_and_naxpy():
    y = np.array([1.0, 2.0])
    axpy(y, np.array([2.0, 3.0]), np.array([1.0, 1.0]))
    assert y.tolist() == [3.0, 5.0]
    naxpy(y, np.array([1.0, 1.0]), np.array([3.0, 5.0]))
    assert y.tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        axpy(y, np.ones(3), np.ones(2))


def sweep_by_lines(field, ws):
    """Gather each grid line, solve it with the numpy reference, scatter it back."""
    out = field.copy()
    g = out.grid()  # (nz, ny, nx, S)
    nx, ny, nz = field.shape
    if ws.axis == 0:
        for k in range(nz):
            for j in range(ny):
                g[k, j, :, :] = thomas_solve(ws, g[k, j, :, :].copy())
    elif ws.axis == 1:
        for k in range(nz):
            for i in range(nx):
                g[k, :, i, :] = thomas_solve(ws, g[k, :, i, :].copy())
    else:
        for j in range(ny):
            for i in range(nx):
                g[:, j, i, :] = thomas_solve(ws, g[:, j, i, :].copy())
    return out


@pytest.mark.parametrize("axis", [0, 1, 2])
@pytest.mark.parametrize("workers", [1, 3])
def test_sweep_matches_line_by_line_reference_bitwise(rng, axis, workers):
    mesh = CartesianMesh(0, 7 * 20.0, 0, 5 * 20.0, 0, 4 * 20.0)
    params = [SubstrateParams("a", 3000.0, 0.2), SubstrateParams("b", 50.0, 0.0)]
    ws = precompute_thomas_coefficients(mesh, params, 0.05, axis)
    field = DensityField(rng.uniform(0, 40, mesh.n_voxels * 2), 2, mesh.shape)
    want = sweep_by_lines(field, ws)
    kind = BackendKind.serial() if workers == 1 else BackendKind.parallel(workers)
    got = diffusion_sweep(field.copy(), ws, backend=kind)
    assert np.array_equal(got.values, want.values)


def test_sweep_rejects_mismatched_workspace():
    mesh = CartesianMesh.from_counts(4, 5, 6)
    ws = precompute_thomas_coefficients(mesh, [SubstrateParams("a", 1.0, 0.0)], 0.1, "y")
    f = DensityField.zeros(mesh, 1)
    with pytest.raises(StateError):
        diffusion_sweep(f, ws, axis="x")
    with pytest.raises(StateError):
        diffusion_sweep(DensityField.zeros(CartesianMesh.from_counts(4, 6, 6), 1), ws)
    with pytest.raises(StateError):
        diffusion_sweep(DensityField.zeros(mesh, 2), ws)


def test_uniform_field_decays_by_closed_form():
    mesh = CartesianMesh.from_counts(6, 5, 4)
    dt, lam = 0.01, 0.9
    ws = build_workspaces(mesh, [SubstrateParams("o", 500.0, lam)], dt)
    f = DensityField.uniform(mesh, [10.0])
    for _ in range(5):
        diffuse_decay_step(f, ws)
    want = 10.0 / (1 + dt * lam / 3) ** 15
    np.testing.assert_allclose(f.values, want, rtol=1e-13)


def test_mass_conserved_without_decay(rng):
    mesh = CartesianMesh.from_counts(8, 7, 6)
    ws = build_workspaces(mesh, [SubstrateParams("o", 2000.0, 0.0)], 0.1)
    f = DensityField(rng.uniform(0, 1, mesh.n_voxels), 1, mesh.shape)
    m0 = f.values.sum()
    for _ in range(20):
        diffuse_decay_step(f, ws)
    assert abs(f.values.sum() - m0) / m0 < 1e-13


def test_maximum_principle(rng):
    mesh = CartesianMesh.from_counts(9, 8, 7)
    ws = build_workspaces(mesh, [SubstrateParams("o", 1e5, 0.0)], 0.5)  # large r
    f = DensityField(rng.uniform(2.0, 5.0, mesh.n_voxels), 1, mesh.shape)
    for _ in range(5):
        diffuse_decay_step(f, ws)
        assert f.values.min() >= 2.0 - 1e-12 and f.values.max() <= 5.0 + 1e-12


def test_single_voxel_mesh_only_decays():
    # nz == 1 makes the mesh two-dimensional: two sweeps with lam/2 each
    mesh = CartesianMesh.from_counts(1, 1, 1)
    ws = build_workspaces(mesh, [SubstrateParams("o", 1e4, 0.3)], 0.1)
    f = DensityField.uniform(mesh, [1.0])
    diffuse_decay_step(f, ws)
    assert f.values[0] == pytest.approx((1 + 0.015) ** -2, rel=1e-15)


def test_dirichlet_applied_and_idempotent(rng):
    mesh = CartesianMesh.from_counts(5, 5, 5)
    dmap = DirichletMap(mesh.n_voxels, 2)
    dmap.add(0, [True, False], [38.0, 0.0])
    dmap.add(62, [True, True], [1.0, 2.0])
    f = DensityField(rng.uniform(0, 1, mesh.n_voxels * 2), 2, mesh.shape)
    before = f.copy()
    apply_dirichlet_conditions(f, dmap)
    rho = f.per_voxel()
    assert rho[0, 0] == 38.0 and rho[0, 1] == before.per_voxel()[0, 1]
    assert rho[62].tolist() == [1.0, 2.0]
    untouched = np.ones(mesh.n_voxels, bool)
    untouched[[0, 62]] = False
    assert np.array_equal(rho[untouched], before.per_voxel()[untouched])
    again = f.copy()
    apply_dirichlet_conditions(again, dmap)
    assert np.array_equal(again.values, f.values)


def test_diffuse_decay_step_validates_workspaces():
    mesh = CartesianMesh.from_counts(4, 4, 4)
    p = [SubstrateParams("o", 1.0, 0.0)]
    ws = build_workspaces(mesh, p, 0.1)
    f = DensityField.zeros(mesh, 1)
    with pytest.raises(StateError):
        diffuse_decay_step(f, ws[:1])
    other = build_workspaces(mesh, p, 0.2)
    with pytest.raises(StateError):
        diffuse_decay_step(f, [ws[0], other[1], ws[2]])


class ShuffledStrategy(SerialStrategy):
    """Runs blocks one at a time in a random order."""

    def __init__(self, parts, seed):
        super().__init__()
        self.parts = parts
        self.rng = np.random.default_rng(seed)
        self.workers = parts

    def chunks(self, n):
        return ParallelStrategy(BackendKind.parallel(self.parts)).chunks(n)

    def run(self, fn, blocks):
        blocks = list(blocks)
        for b in self.rng.permutation(len(blocks)):
            fn(*blocks[b])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(2, 7),
       st.integers(0, 2**32 - 1))
def test_block_order_does_not_change_result(nx, ny, nz, parts, seed):
    mesh = CartesianMesh.from_counts(nx, ny, nz)
    params = [SubstrateParams("a", 800.0, 0.05), SubstrateParams("b", 20.0, 1.0)]
    ws = build_workspaces(mesh, params, 0.02)
    rng = np.random.default_rng(seed)
    f = DensityField(rng.uniform(0, 10, mesh.n_voxels * 2), 2, mesh.shape)
    a = f.copy()
    diffuse_decay_step(a, ws, backend=BackendKind.serial())
    b = f.copy()
    diffuse_decay_step(b, ws, backend=ShuffledStrategy(parts, seed))
    assert np.array_equal(a.values, b.values)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0.0, 1e5), st.floats(0.0, 5.0), st.floats(1e-3, 1.0))
def test_operator_rows_sum_to_decay_factor(n, D, lam, dt):
    # zero-flux rows: every row of A sums to 1 + dt*lam/dims
    mesh = CartesianMesh.from_counts(n, 2, 2)
    ws = precompute_thomas_coefficients(mesh, [SubstrateParams("a", D, lam)], dt, "x")
    rows = ws.matrix(0).sum(axis=1)
    np.testing.assert_allclose(rows, 1 + dt * lam / 3, rtol=1e-12, atol=1e-12 * (1 + dt * D / 400))


def test_reference_coefficients_line_of_eight():
    mesh = CartesianMesh.from_counts(8, 3, 3, 20.0)
    ws = precompute_thomas_coefficients(mesh, [SubstrateParams("o", 1000.0, 0.1)], 0.01, "x")
    want = dense_operator(8, 1000.0, 0.1, 20.0, 0.01, 3)
    got = ws.matrix(0)
    for row in range(8):
        np.testing.assert_allclose(got[row], want[row], rtol=1e-15, atol=0)


def test_random_eight_by_eight_system(rng):
    sub, diag, sup = random_system(rng, 8)
    ws = tridiagonal_workspace(sub, diag, sup)
    b = rng.normal(size=(8, 1))
    x = thomas_solve(ws, b.copy())[:, 0]
    ref = np.linalg.solve(ws.matrix(0), b[:, 0])
    assert np.max(np.abs(x - ref)) / np.max(np.abs(ref)) <= 1e-12


def test_spike_on_line_conserves_mass():
    mesh = CartesianMesh.from_counts(16, 1, 1, 20.0)
    ws = precompute_thomas_coefficients(mesh, [SubstrateParams("o", 1000.0, 0.0)], 0.01, "x")
    f = DensityField.zeros(mesh, 1)
    f.values[5] = 1.0
    diffusion_sweep(f, ws)
    assert abs(f.values.sum() * 20.0 - 20.0) / 20.0 <= 1e-13
    assert f.values[5] < 1.0 and f.values[4] > 0


def test_sweep_on_cube_matches_line_reference(rng):
    mesh = CartesianMesh.from_counts(8, 8, 8)
    f = DensityField(rng.uniform(0, 1, mesh.n_voxels), 1, mesh.shape)
    for ws in build_workspaces(mesh, [SubstrateParams("o", 1000.0, 0.1)], 0.01):
        assert np.array_equal(diffusion_sweep(f.copy(), ws).values, sweep_by_lines(f, ws).values)


@pytest.mark.parametrize("shape", [(5, 4, 3), (6, 5, 1)])
def test_decay_only_matches_scalar_recurrence(rng, shape):
    mesh = CartesianMesh.from_counts(*shape)
    dt, lam = 0.01, 0.7
    ws = build_workspaces(mesh, [SubstrateParams("o", 0.0, lam)], dt)
    f = DensityField(rng.uniform(0, 50, mesh.n_voxels), 1, mesh.shape)
    old = f.values.copy()
    diffuse_decay_step(f, ws)
    want = old / (1 + dt * lam / mesh.dims) ** mesh.dims
    np.testing.assert_allclose(f.values, want, rtol=1e-14, atol=0)


def test_dirichlet_matches_loop_oracle(rng):
    mesh = CartesianMesh.from_counts(6, 6, 6)
    S = 3
    dmap = DirichletMap(mesh.n_voxels, S)
    entries = {}
    for v in rng.choice(mesh.n_voxels, 40, replace=False):
        mask = rng.random(S) < 0.5
        vals = rng.uniform(0, 10, S)
        dmap.add(int(v), mask, vals)
        entries[int(v)] = (mask, vals)
    f = DensityField(rng.uniform(0, 1, mesh.n_voxels * S), S, mesh.shape)
    want = f.values.copy()
    for v, (mask, vals) in entries.items():
        for s in range(S):
            if mask[s]:
                want[v * S + s] = vals[s]
    apply_dirichlet_conditions(f, dmap)
    assert np.array_equal(f.values, want)


def test_axpy_matches_loop_oracle(rng):
    y, a, x = rng.normal(size=(3, 50))
    want_plus = [y[i] + a[i] * x[i] for i in range(50)]
    want_minus = [y[i] - a[i] * x[i] for i in range(50)]
    assert axpy(y.copy(), a, x).tolist() == want_plus
    assert naxpy(y.copy(), a, x).tolist() == want_minus
