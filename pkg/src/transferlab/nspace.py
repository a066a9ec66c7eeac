"""The Hilbert space N of site-supported fields and its time-slice spaces.

A site vector ``f`` pairs with ``h`` through
``<f, h>_N = sum_ij conj(f_i) E(i, j) h_j mu_i mu_j``.  A slice space carries
the equal-time kernel with slice measure ``nu = sqrt(g) * (spatial cell
volume)``; the time delta of the embedding is realized as ``1 / h0`` on the
slice so embeddings are exact isometries of finite matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .assembly import GreenKernel
from .errors import NumericError, UsageError
from .spectral import cho_solve, cholesky

EIG_FLOOR = 1e-13


class NSpace:
    def __init__(self, kernel: GreenKernel):
        self.kernel = kernel
        self.operator = kernel.operator
        self.lattice = kernel.operator.lattice
        self.metric = kernel.operator.metric
        self.weights = kernel.operator.weights
        self.mass = kernel.operator.mass
        self._slices: dict[int, SliceSpace] = {}

    @property
    def size(self) -> int:
        return self.lattice.count

    @property
    def h0(self) -> float:
        return self.lattice.spacing[0]

    @property
    def nt(self) -> int:
        return self.lattice.shape[0]

    def gram(self, rows, cols) -> np.ndarray:
        """``<delta_i, delta_j>_N = mu_i E(i, j) mu_j`` for i in rows, j in cols."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        mu = self.weights
        return mu[rows, None] * self.kernel.block(rows, cols) * mu[None, cols]

    def dual(self, f) -> np.ndarray:
        """The vector ``(<delta_i, f>_N)_i`` over all sites."""
        mu = self.weights
        return mu * self.kernel.apply(mu * np.asarray(f))

    def slice(self, sigma: int) -> "SliceSpace":
        return slice_space(sigma, self)


def n_inner(f, h, space: NSpace) -> complex:
    f = np.asarray(f)
    h = np.asarray(h)
    if f.shape != (space.size,) or h.shape != (space.size,):
        raise UsageError(f"site vectors must have length {space.size}", where="nspace.n_inner")
    val = np.vdot(f, space.dual(h))
    return complex(val) if np.iscomplexobj(val) else float(val)


def n_norm(f, space: NSpace) -> float:
    return float(np.sqrt(max(np.real(n_inner(f, f, space)), 0.0)))


class SliceSpace:
    """N_sigma: the slice sites with Gram ``S(x, y) = nu_x E(sx, sy) nu_y``."""

    def __init__(self, sigma: int, space: NSpace):
        lat = space.lattice
        self.sigma = int(sigma)
        self.space = space
        self.sites = lat.slice_sites(self.sigma)
        self.nu = space.weights[self.sites] / space.h0
        self.kernel = space.kernel.block(self.sites, self.sites)
        self.gram = self.nu[:, None] * self.kernel * self.nu[None, :]

    @property
    def size(self) -> int:
        return self.sites.size

    @cached_property
    def factor(self):
        try:
            return cholesky(self.gram)
        except NumericError as exc:
            raise NumericError(f"slice {self.sigma}: Gram factorization failed", where="nspace.slice_space") from exc

    def solve(self, b) -> np.ndarray:
        return cho_solve(self.factor, b)

    def inner(self, psi, phi) -> complex:
        val = np.vdot(psi, self.gram @ phi)
        return complex(val) if np.iscomplexobj(val) else float(val)

    def norm(self, psi) -> float:
        return float(np.sqrt(max(np.real(self.inner(psi, psi)), 0.0)))

    @cached_property
    def sqrt_factor(self):
        """Eigendecomposition of ``W = sqrt(nu) E_ss sqrt(nu)``."""
        rn = np.sqrt(self.nu)
        W = rn[:, None] * self.kernel * rn[None, :]
        W = 0.5 * (W + W.T)
        lam, Q = np.linalg.eigh(W)
        if lam[0] <= EIG_FLOOR * lam[-1]:
            raise NumericError(
                f"slice {self.sigma}: kernel eigenvalue {lam[0]:.3e} below floor {EIG_FLOOR:.0e} * {lam[-1]:.3e}",
                where="nspace.slice_sqrt_apply",
            )
        return lam, Q

    @cached_property
    def sqrt_matrix(self) -> np.ndarray:
        """Matrix of the forward map ``Ê^{1/2}``."""
        lam, Q = self.sqrt_factor
        rn = np.sqrt(self.nu)
        return (Q * np.sqrt(lam)) @ Q.T * (rn[None, :] / rn[:, None])

    @cached_property
    def sqrt_adjoint_matrix(self) -> np.ndarray:
        """Matrix of ``(Ê^{1/2})†``, the inverse of the forward map."""
        lam, Q = self.sqrt_factor
        rn = np.sqrt(self.nu)
        return (Q / np.sqrt(lam)) @ Q.T * (rn[None, :] / rn[:, None])

    def frame_sqrt(self, inverse=False) -> np.ndarray:
        """``W^{±1/2}``: the forward map (or its inverse) in the sqrt(nu)-orthonormal frame."""
        lam, Q = self.sqrt_factor
        p = -0.5 if inverse else 0.5
        return (Q * lam**p) @ Q.T

    def kernel_apply(self, psi) -> np.ndarray:
        """``Ê psi`` with ``(Ê psi)(x) = sum_y E(sx, sy) psi_y nu_y``."""
        return self.kernel @ (self.nu * psi)


def slice_space(sigma: int, space: NSpace) -> SliceSpace:
    if not 0 <= int(sigma) < space.nt:
        raise UsageError(f"slice {sigma} outside [0, {space.nt})", where="nspace.slice_space")
    sigma = int(sigma)
    if sigma not in space._slices:
        space._slices[sigma] = SliceSpace(sigma, space)
    return space._slices[sigma]


@dataclass(frozen=True, eq=False)
class SliceVector:
    slice: SliceSpace
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values) != (self.slice.size,):
            raise UsageError(
                f"slice vector has {np.size(self.values)} values for {self.slice.size} sites",
                where="nspace.SliceVector",
            )

    def norm(self) -> float:
        return self.slice.norm(self.values)


def embed(psi: SliceVector) -> np.ndarray:
    """j_sigma: put ``psi / h0`` on the slice, zero elsewhere."""
    sl = psi.slice
    f = np.zeros(sl.space.size, dtype=np.result_type(psi.values, float))
    f[sl.sites] = psi.values / sl.space.h0
    return f


def restrict(f, sigma: int, space: NSpace) -> SliceVector:
    """j_sigma^*: the slice vector u with ``<phi, u>_Nσ = <j phi, f>_N`` for all phi."""
    sl = slice_space(sigma, space)
    f = np.asarray(f)
    if f.shape != (space.size,):
        raise UsageError(f"site vector must have length {space.size}", where="nspace.restrict")
    rhs = sl.nu * space.kernel.apply(space.weights * f)[sl.sites]
    try:
        u = sl.solve(rhs)
    except NumericError as exc:
        raise NumericError(f"slice {sigma}: Gram solve failed", where="nspace.restrict") from exc
    return SliceVector(sl, u)


def slice_sqrt_apply(space: SliceSpace, psi, mode: str = "forward") -> SliceVector:
    values = psi.values if isinstance(psi, SliceVector) else np.asarray(psi)
    if mode == "forward":
        M = space.sqrt_matrix
    elif mode == "adjoint-inverse":
        M = space.sqrt_adjoint_matrix
    else:
        raise UsageError(f"unknown mode {mode!r}", where="nspace.slice_sqrt_apply")
    return SliceVector(space, M @ values)


def l2_nu_norm(space: SliceSpace, values) -> float:
    return float(np.sqrt(np.real(np.vdot(values, space.nu * values))))


def sqrt_identity_residuals(space: SliceSpace) -> dict:
    """Operator residuals of the square-root identities on one slice.

    ``forward_adjoint``: ||Ê^{1/2} (Ê^{1/2})† - 1|| on L²(nu);
    ``adjoint_forward``: ||(Ê^{1/2})† Ê^{1/2} - 1|| on N_sigma;
    ``isometry``: ||F^T diag(nu) F - S|| / ||S||, i.e. Ê^{1/2} preserves norms;
    ``square``: ||F F - Ê|| / ||Ê||.
    """
    F = space.sqrt_matrix
    G = space.sqrt_adjoint_matrix
    eye = np.eye(space.size)
    rn = np.sqrt(space.nu)
    # L²(nu) operator norm of X is the 2-norm of sqrt(nu) X sqrt(nu)^{-1}
    r1 = np.linalg.norm(rn[:, None] * (F @ G - eye) / rn[None, :], 2)
    L = np.linalg.cholesky(0.5 * (space.gram + space.gram.T))
    D = G @ F - eye
    r2 = np.linalg.norm(L.T @ D @ np.linalg.inv(L.T), 2)
    iso = np.linalg.norm(F.T @ (space.nu[:, None] * F) - space.gram, 2) / np.linalg.norm(space.gram, 2)
    Ehat = space.kernel * space.nu[None, :]
    sq = np.linalg.norm(F @ F - Ehat, 2) / np.linalg.norm(Ehat, 2)
    return {"forward_adjoint": float(r1), "adjoint_forward": float(r2), "isometry": float(iso), "square": float(sq)}
