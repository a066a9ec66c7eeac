"""Galerkin discretization of Δ + m² on a metric lattice and its inverse.

The bilinear form ∫ (g^{kl} ∂_k u ∂_l v + m² u v) √g is assembled with
multilinear (Q1) nodal elements into the symmetric matrix ``K``.  The
lattice sites are all unknowns; the homogeneous Dirichlet boundary sits one
cell outside the lattice on every face.  The weighted operator is
``A = diag(mu)^{-1} K`` so that ``diag(mu) A`` is symmetric, and the Green
kernel in the convention ``(E f)_i = sum_j E(i, j) f_j mu_j`` is ``K^{-1}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from . import _accel
from .errors import ConfigurationError, NumericError, UsageError
from .lattice import Lattice, MetricField, measure_weights

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000
SOLVE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    lattice: Lattice
    metric: MetricField
    stiffness: sp.csr_matrix
    weights: np.ndarray
    mass: float

    @property
    def size(self) -> int:
        return self.lattice.count

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.weights) @ self.stiffness

    @cached_property
    def _lu(self):
        return spla.splu(self.stiffness.tocsc())

    def weighted_symmetry_residual(self) -> float:
        K = self.stiffness
        return float(spla.norm(K - K.T) / spla.norm(K))


def assemble_helmholtz(lattice: Lattice, metric: MetricField, m: float) -> WeightedOperator:
    if not m > 0:
        raise ConfigurationError(f"mass must be positive, got {m}", where="assembly.assemble_helmholtz")
    if metric.lattice != lattice:
        raise ConfigurationError("metric sampled on a different lattice", where="assembly.assemble_helmholtz")
    coef = metric.sqrt_det[:, None, None] * metric.inverse
    mass_coef = m * m * metric.sqrt_det
    rows, cols, vals = _accel.assemble_triplets(coef, mass_coef, lattice.spacing, lattice.shape)
    n = lattice.count
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.eliminate_zeros()
    K.sort_indices()
    return WeightedOperator(lattice, metric, K, measure_weights(metric), float(m))


def _weighted_residual(op: WeightedOperator, u, rhs) -> float:
    # ||A u - rhs||_mu / ||rhs||_mu per column, with ||v||_mu^2 = sum mu |v|^2
    w = op.weights.reshape(-1, *([1] * (rhs.ndim - 1)))
    r = (op.stiffness @ u) / w - rhs
    num = np.sqrt(np.sum(w * np.abs(r) ** 2, axis=0))
    den = np.sqrt(np.sum(w * np.abs(rhs) ** 2, axis=0))
    return float(np.max(num / np.where(den == 0, 1.0, den)))


def _solve_real(op: WeightedOperator, rhs: np.ndarray) -> np.ndarray:
    b = op.weights[:, None] * rhs if rhs.ndim == 2 else op.weights * rhs
    n = op.size
    if n <= DENSE_LIMIT:
        return op._lu.solve(b)
    cap = int(50 * np.sqrt(n))
    inv_w = 1.0 / op.weights
    cols = b.reshape(n, -1)
    out = np.empty_like(cols)
    for j in range(cols.shape[1]):
        x, its, res = _accel.pcg(op.stiffness, cols[:, j], inv_w, SOLVE_RTOL, cap)
        if res > SOLVE_RTOL:
            raise NumericError(
                f"CG stopped after {its} iterations at relative residual {res:.3e}",
                where="assembly.solve",
                residual=res,
            )
        out[:, j] = x
    return out.reshape(b.shape)


def solve(op: WeightedOperator, rhs) -> np.ndarray:
    """Solve ``A u = rhs``; ``rhs`` may be a vector or an ``(n, k)`` block."""
    rhs = np.asarray(rhs)
    if rhs.shape[0] != op.size:
        raise UsageError(f"rhs has {rhs.shape[0]} rows, operator has {op.size}", where="assembly.solve")
    if np.iscomplexobj(rhs):
        return _solve_real(op, rhs.real.astype(float)) + 1j * _solve_real(op, rhs.imag.astype(float))
    rhs = rhs.astype(float)
    u = _solve_real(op, rhs)
    if op.size <= DENSE_LIMIT:
        res = _weighted_residual(op, u, rhs)
        if res > SOLVE_RTOL:
            # one step of iterative refinement before giving up
            u = u + _solve_real(op, rhs - op.matrix @ u)
            res = _weighted_residual(op, u, rhs)
            if res > SOLVE_RTOL:
                raise NumericError(f"direct solve residual {res:.3e}", where="assembly.solve", residual=res)
    return u


class GreenKernel:
    """Access to ``E = K^{-1}``; dense up to 5000 sites, columns on demand above."""

    def __init__(self, op: WeightedOperator, dense: bool | None = None):
        self.operator = op
        self.dense = op.size <= DENSE_LIMIT if dense is None else dense
        self._cols: dict[int, np.ndarray] = {}
        self._E = None
        if self.dense:
            E = solve(op, np.diag(1.0 / op.weights))
            self._E = E

    @property
    def size(self) -> int:
        return self.operator.size

    @property
    def matrix(self) -> np.ndarray:
        if self._E is None:
            raise UsageError("kernel is stored column-on-demand", where="assembly.GreenKernel")
        return self._E

    def columns(self, js) -> np.ndarray:
        js = np.atleast_1d(np.asarray(js, dtype=np.int64))
        if self._E is not None:
            return self._E[:, js]
        missing = [int(j) for j in js if int(j) not in self._cols]
        if missing:
            rhs = np.zeros((self.size, len(missing)))
            rhs[missing, np.arange(len(missing))] = 1.0 / self.operator.weights[missing]
            sol = solve(self.operator, rhs)
            for k, j in enumerate(missing):
                self._cols[j] = sol[:, k]
        return np.stack([self._cols[int(j)] for j in js], axis=1)

    def column(self, j) -> np.ndarray:
        return self.columns([j])[:, 0]

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        if self._E is not None:
            return self._E[np.ix_(rows, np.asarray(cols, dtype=np.int64))]
        return self.columns(cols)[rows, :]

    def entry(self, i, j) -> float:
        if self._E is None and int(i) in self._cols and int(j) not in self._cols:
            return float(self._cols[int(i)][int(j)])
        return float(self.block([i], [j])[0, 0])

    def apply(self, v) -> np.ndarray:
        """``sum_j E(i, j) v_j``."""
        v = np.asarray(v)
        if self._E is not None:
            return self._E @ v
        w = self.operator.weights
        return solve(self.operator, v / (w[:, None] if v.ndim == 2 else w))


def green_kernel(op: WeightedOperator) -> GreenKernel:
    return GreenKernel(op)


def adjacency_graph(op: WeightedOperator) -> sp.csr_matrix:
    """Undirected graph with an edge wherever ``A(i, j) != 0``, ``i != j``."""
    G = (op.stiffness != 0).astype(np.int8).tolil()
    G.setdiag(0)
    G = G.tocsr()
    G.eliminate_zeros()
    return G


def kernel_decay_rate(kernel: GreenKernel, source: int, steps) -> float:
    """Exponential decay rate of E along the time axis through ``source``.

    Fits ``log E(r) + (dim-1)/2 log r = c - kappa r`` by least squares, which
    removes the algebraic prefactor of the free-space kernel in ``dim``
    dimensions.  ``steps`` are positive time-index offsets from the source.
    """
    lat = kernel.operator.lattice
    steps = np.asarray(steps, dtype=int)
    col = kernel.column(source)
    targets = source + steps * lat.slice_size
    r = steps * lat.spacing[0]
    y = np.log(col[targets]) + 0.5 * (lat.dim - 1) * np.log(r)
    slope = np.polyfit(r, y, 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# Agmon distance
# ---------------------------------------------------------------------------

CONVENTIONS = {"linear": "edge length = m * riemannian length", "sqrt": "edge length = sqrt(m) * riemannian length"}


def _cell_neighbor_edges(lattice: Lattice):
    shape = np.array(lattice.shape)
    d = lattice.dim
    idx = np.arange(lattice.count).reshape(lattice.shape)
    src, dst, offs = [], [], []
    for off in np.ndindex(*(3,) * d):
        o = np.array(off) - 1
        if not np.any(o) or tuple(o) < (0,) * d:
            continue
        sl_a = tuple(slice(max(0, -k), n - max(0, k)) for k, n in zip(o, shape))
        sl_b = tuple(slice(max(0, k), n - max(0, -k)) for k, n in zip(o, shape))
        a = idx[sl_a].ravel()
        b = idx[sl_b].ravel()
        src.append(a)
        dst.append(b)
        offs.append(np.broadcast_to(o * np.array(lattice.spacing), (a.size, d)))
    return np.concatenate(src), np.concatenate(dst), np.concatenate(offs)


def agmon_graph(metric: MetricField, m: float, convention: str = "linear") -> sp.csr_matrix:
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown Agmon convention {convention!r}", where="assembly.agmon_distance")
    if not m > 0:
        raise ConfigurationError(f"mass must be positive, got {m}", where="assembly.agmon_distance")
    lat = metric.lattice
    a, b, delta = _cell_neighbor_edges(lat)
    g_mid = 0.5 * (metric.g[a] + metric.g[b])
    length = np.sqrt(np.einsum("ei,eij,ej->e", delta, g_mid, delta))
    scale = m if convention == "linear" else np.sqrt(m)
    w = scale * length
    n = lat.count
    G = sp.coo_matrix((w, (a, b)), shape=(n, n)).tocsr()
    return G + G.T


def agmon_distances(metric: MetricField, m: float, source: int, convention: str = "linear") -> np.ndarray:
    G = agmon_graph(metric, m, convention)
    return csgraph.dijkstra(G, directed=False, indices=int(source))


def agmon_distance(metric: MetricField, m: float, a: int, b: int, convention: str = "linear") -> float:
    if a == b:
        return 0.0
    return float(agmon_distances(metric, m, a, convention)[int(b)])


def geodesic_growth(metric: MetricField, m: float, source: int, convention: str = "linear") -> dict:
    """Distance from ``source`` to each later time slice, and its fitted slope.

    ``slope`` estimates the constant c in ``rho(sigma0, x0; sigma, x) > c |sigma - sigma0|``.
    """
    lat = metric.lattice
    dist = agmon_distances(metric, m, source, convention).reshape(lat.shape[0], lat.slice_size)
    s0 = int(lat.time_of(source))
    k = np.arange(lat.shape[0]) - s0
    later = k > 0
    tau = k[later] * lat.spacing[0]
    nearest = dist[later].min(axis=1)
    slope = float(np.polyfit(tau, nearest, 1)[0]) if tau.size > 1 else float(nearest[0] / tau[0])
    return {
        "tau": tau,
        "distance": nearest,
        "slope": slope,
        "min_ratio": float(np.min(nearest / tau)),
        "convention": CONVENTIONS[convention],
    }
