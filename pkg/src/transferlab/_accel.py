"""Hot kernels: Q1 cell assembly and Jacobi-preconditioned CG.

Both kernels exist twice, as numba ``@njit`` loops and as plain numpy.  The
numba path is used when numba imports and ``TRANSFERLAB_NUMBA`` is not set
to ``0``.  Results agree to rounding; each path is deterministic on its own.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("TRANSFERLAB_NUMBA", "1") != "0"


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"


# ---------------------------------------------------------------------------
# reference element tensors
# ---------------------------------------------------------------------------

def reference_tensors(spacing):
    """Stiffness pieces ``B[k, l, a, b] = ∫ ∂_k φ_a ∂_l φ_b`` and mass ``M[a, b]``.

    Local corner ``a`` has bits ``a_axis`` in C order (axis 0 most significant).
    """
    d = len(spacing)
    nc = 2**d
    bits = np.array([[(a >> (d - 1 - ax)) & 1 for ax in range(d)] for a in range(nc)])
    one_d = []
    for h in spacing:
        mass = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        stiff = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
        cross = np.array([[-0.5, -0.5], [0.5, 0.5]])  # ∫ φ_a' φ_b
        one_d.append((mass, stiff, cross))
    B = np.ones((d, d, nc, nc))
    M = np.ones((nc, nc))
    for a in range(nc):
        for b in range(nc):
            for ax in range(d):
                mass, stiff, cross = one_d[ax]
                ia, ib = bits[a, ax], bits[b, ax]
                M[a, b] *= mass[ia, ib]
                for k in range(d):
                    for l in range(d):
                        if ax == k and ax == l:
                            f = stiff[ia, ib]
                        elif ax == k:
                            f = cross[ia, ib]
                        elif ax == l:
                            f = cross[ib, ia]
                        else:
                            f = mass[ia, ib]
                        B[k, l, a, b] *= f
    return B, M, bits


def cell_corners(shape, bits):
    """Corner node multi-indices for every cell of the ghost-extended grid.

    Cells run over ``shape[a] + 1`` positions per axis; corner coordinates lie
    in ``[-1, shape[a]]`` where -1 and ``shape[a]`` are Dirichlet ghost nodes.
    Returns flat site indices with ghosts clamped onto the lattice and a mask
    of real (non-ghost) corners, both of shape ``(ncells, 2**d)``.
    """
    shape = np.asarray(shape)
    d = len(shape)
    cell_grid = np.stack(np.meshgrid(*[np.arange(n + 1) for n in shape], indexing="ij"), -1).reshape(-1, d)
    corners = cell_grid[:, None, :] - 1 + bits[None, :, :]
    real = np.all((corners >= 0) & (corners < shape), axis=2)
    clamped = np.clip(corners, 0, shape - 1)
    flat = np.ravel_multi_index(tuple(clamped[..., ax] for ax in range(d)), tuple(shape))
    return flat.astype(np.int64), real


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _assemble_numpy(coef, mass_coef, B, M, corners, real):
    c_cell = coef[corners].mean(axis=1)  # (ncell, d, d)
    m_cell = mass_coef[corners].mean(axis=1)
    ke = np.einsum("ckl,klab->cab", c_cell, B) + m_cell[:, None, None] * M
    rows = np.broadcast_to(corners[:, :, None], ke.shape)
    cols = np.broadcast_to(corners[:, None, :], ke.shape)
    keep = real[:, :, None] & real[:, None, :]
    return rows[keep], cols[keep], ke[keep]


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _assemble_loop(coef, mass_coef, B, M, corners, real):
        ncell, nc = corners.shape
        d = coef.shape[1]
        cap = 0
        for c in range(ncell):
            nreal = 0
            for a in range(nc):
                if real[c, a]:
                    nreal += 1
            cap += nreal * nreal
        rows = np.empty(cap, np.int64)
        cols = np.empty(cap, np.int64)
        vals = np.empty(cap, np.float64)
        ccell = np.empty((d, d))
        pos = 0
        for c in range(ncell):
            ccell[:, :] = 0.0
            mcell = 0.0
            for a in range(nc):
                node = corners[c, a]
                mcell += mass_coef[node]
                for k in range(d):
                    for l in range(d):
                        ccell[k, l] += coef[node, k, l]
            mcell /= nc
            for k in range(d):
                for l in range(d):
                    ccell[k, l] /= nc
            for a in range(nc):
                if not real[c, a]:
                    continue
                for b in range(nc):
                    if not real[c, b]:
                        continue
                    v = mcell * M[a, b]
                    for k in range(d):
                        for l in range(d):
                            v += ccell[k, l] * B[k, l, a, b]
                    rows[pos] = corners[c, a]
                    cols[pos] = corners[c, b]
                    vals[pos] = v
                    pos += 1
        return rows, cols, vals


def assemble_triplets(coef, mass_coef, spacing, shape):
    """COO triplets of the Galerkin matrix for per-site coefficients.

    ``coef`` is ``sqrt(g) g^{-1}`` per site, ``mass_coef`` is ``m**2 sqrt(g)``.
    Cell coefficients are corner averages; ghost corners reuse the nearest
    lattice site's values.
    """
    B, M, bits = reference_tensors(spacing)
    corners, real = cell_corners(shape, bits)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    mass_coef = np.ascontiguousarray(mass_coef, dtype=np.float64)
    if numba_enabled():
        return _assemble_loop(coef, mass_coef, B, M, corners, real)
    return _assemble_numpy(coef, mass_coef, B, M, corners, real)


# ---------------------------------------------------------------------------
# preconditioned conjugate gradient on K x = b
# ---------------------------------------------------------------------------

def _pcg_numpy(indptr, indices, data, b, inv_diag, inv_w, tol, maxiter):
    import scipy.sparse as sp

    n = b.shape[0]
    K = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.sqrt(np.dot(r * inv_w, r))
    if bnorm == 0.0:
        return x, 0, 0.0
    z = inv_diag * r
    p = z.copy()
    rz = np.dot(r, z)
    res = 1.0
    for it in range(1, maxiter + 1):
        q = K @ p
        alpha = rz / np.dot(p, q)
        x += alpha * p
        r -= alpha * q
        res = np.sqrt(np.dot(r * inv_w, r)) / bnorm
        if res <= tol:
            return x, it, res
        z = inv_diag * r
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, res


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _csr_matvec(indptr, indices, data, x, out):
        for i in range(out.shape[0]):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * x[indices[k]]
            out[i] = s

    @numba.njit(cache=True)
    def _pcg_loop(indptr, indices, data, b, inv_diag, inv_w, tol, maxiter):
        n = b.shape[0]
        x = np.zeros(n)
        r = b.copy()
        bn = 0.0
        for i in range(n):
            bn += r[i] * r[i] * inv_w[i]
        bnorm = np.sqrt(bn)
        if bnorm == 0.0:
            return x, 0, 0.0
        z = inv_diag * r
        p = z.copy()
        q = np.empty(n)
        rz = 0.0
        for i in range(n):
            rz += r[i] * z[i]
        res = 1.0
        for it in range(1, maxiter + 1):
            _csr_matvec(indptr, indices, data, p, q)
            pq = 0.0
            for i in range(n):
                pq += p[i] * q[i]
            alpha = rz / pq
            rn = 0.0
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
                rn += r[i] * r[i] * inv_w[i]
            res = np.sqrt(rn) / bnorm
            if res <= tol:
                return x, it, res
            rz_new = 0.0
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
        return x, maxiter, res


def pcg(K, b, inv_w, tol, maxiter):
    """Solve ``K x = b`` for SPD CSR ``K`` with a Jacobi preconditioner.

    The stopping residual is measured in the norm ``sqrt(sum(r**2 * inv_w))``.
    Returns ``(x, iterations, relative_residual)``.
    """
    inv_diag = 1.0 / K.diagonal()
    args = (
        K.indptr.astype(np.int64),
        K.indices.astype(np.int64),
        K.data.astype(np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        inv_diag,
        np.ascontiguousarray(inv_w, dtype=np.float64),
        float(tol),
        int(maxiter),
    )
    if numba_enabled():
        return _pcg_loop(*args)
    return _pcg_numpy(*args)
