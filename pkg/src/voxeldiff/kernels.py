"""Compiled inner loops shared by every execution backend.

Each kernel processes one block of independent work items and releases the
GIL, so the parallel backend runs blocks on a thread pool.  The floating
point operation sequence for a line or voxel does not depend on the block
boundaries, which keeps results bitwise identical across worker counts.
Compiled without ``fastmath`` so no multiply-add contraction takes place.
"""

from numba import njit


@njit(nogil=True, cache=True)
def thomas_lines(d, a, denom, cprime, o0, o1, p0, p1):
    """Solve tridiagonal systems along axis 1 of ``d`` in place.

    ``d`` has shape ``(outer, n, m, S)``; every ``(o, p, s)`` triple is one
    line of length ``n``.  ``a``, ``denom`` and ``cprime`` are ``(n, S)``.
    Lines with ``o0 <= o < o1`` and ``p0 <= p < p1`` are solved.
    """
    n = d.shape[1]
    n_sub = d.shape[3]
    for o in range(o0, o1):
        for p in range(p0, p1):
            for s in range(n_sub):
                d[o, 0, p, s] = d[o, 0, p, s] * denom[0, s]
        for i in range(1, n):
            for p in range(p0, p1):
                for s in range(n_sub):
                    d[o, i, p, s] = (d[o, i, p, s] - a[i, s] * d[o, i - 1, p, s]) * denom[i, s]
        for i in range(n - 2, -1, -1):
            for p in range(p0, p1):
                for s in range(n_sub):
                    d[o, i, p, s] = d[o, i, p, s] - cprime[i, s] * d[o, i + 1, p, s]


@njit(nogil=True, cache=True)
def agent_sources(rho, voxels, offsets, gain, loss, g0, g1):
    """Sequential implicit secretion/uptake updates for voxel groups ``g0..g1``.

    ``rho`` is ``(n_voxels, S)``.  Agents of group ``g`` occupy rows
    ``offsets[g]:offsets[g+1]`` of ``gain``/``loss``; each applies
    ``rho <- (rho + gain) / loss`` to voxel ``voxels[g]``.
    """
    n_sub = rho.shape[1]
    for g in range(g0, g1):
        v = voxels[g]
        for k in range(offsets[g], offsets[g + 1]):
            for s in range(n_sub):
                rho[v, s] = (rho[v, s] + gain[k, s]) / loss[k, s]


@njit(nogil=True, cache=True)
def thomas_lines_x(d, a, denom, cprime, k0, k1, j0, j1):
    """x-direction variant of :func:`thomas_lines` on a ``(nz, ny, nx, S)`` grid.

    The ``ny`` lines of a z-plane are advanced together so that their
    independent recurrences overlap; per-line arithmetic is unchanged.
    """
    n = d.shape[2]
    n_sub = d.shape[3]
    for k in range(k0, k1):
        for j in range(j0, j1):
            for s in range(n_sub):
                d[k, j, 0, s] = d[k, j, 0, s] * denom[0, s]
        for i in range(1, n):
            for j in range(j0, j1):
                for s in range(n_sub):
                    d[k, j, i, s] = (d[k, j, i, s] - a[i, s] * d[k, j, i - 1, s]) * denom[i, s]
        for i in range(n - 2, -1, -1):
            for j in range(j0, j1):
                for s in range(n_sub):
                    d[k, j, i, s] = d[k, j, i, s] - cprime[i, s] * d[k, j, i + 1, s]
