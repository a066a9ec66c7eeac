"""Regions, N-orthogonal projectors onto them, and the Markov property.

All norms of projector products are computed in coefficient space: a field
supported on a region R is ``sum_{i in R} b_i delta_i`` and its N-norm is
``b^H G_RR b`` with ``G = diag(mu) E diag(mu)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NumericError, UsageError
from .nspace import NSpace
from .spectral import cho_solve, cholesky, power_iteration

GEOM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Region:
    sites: np.ndarray
    name: str = "region"
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.sites) == 0:
            raise UsageError(f"region {self.name!r} is empty", where="markov.region_from_mask")

    @property
    def size(self) -> int:
        return len(self.sites)

    def __or__(self, other: "Region") -> "Region":
        sites, idx = np.unique(np.concatenate([self.sites, other.sites]), return_index=True)
        pts = None
        if self.points is not None and other.points is not None:
            pts = np.concatenate([self.points, other.points])[idx]
        return Region(sites, f"{self.name}|{other.name}", pts)


# geometric predicates: callables on an (n, dim) array of points -> bool mask

@dataclass(frozen=True)
class Box:
    """Axis-aligned box; ``None`` leaves a side open.  Bounds are inclusive."""

    lower: tuple
    upper: tuple

    def __call__(self, pts):
        pts = np.asarray(pts)
        mask = np.ones(len(pts), dtype=bool)
        for ax, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if lo is not None:
                mask &= pts[:, ax] >= lo - GEOM_TOL
            if hi is not None:
                mask &= pts[:, ax] <= hi + GEOM_TOL
        return mask


def half_space(axis: int, op: str, value: float, dim: int = 2) -> Box:
    lower = [None] * dim
    upper = [None] * dim
    if op in ("<=", "<"):
        upper[axis] = value
    elif op in (">=", ">"):
        lower[axis] = value
    else:
        raise UsageError(f"half-space operator must be <= or >=, got {op!r}", where="markov.half_space")
    return Box(tuple(lower), tuple(upper))


def rectangle(t_range, x_range) -> Box:
    return Box((t_range[0], x_range[0]), (t_range[1], x_range[1]))


@dataclass(frozen=True)
class Union:
    parts: tuple

    def __call__(self, pts):
        mask = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            mask |= p(pts)
        return mask


@dataclass(frozen=True)
class SiteList:
    """Predicate matching an explicit list of site indices (ignores coordinates)."""

    sites: tuple

    def __call__(self, pts):
        mask = np.zeros(len(pts), dtype=bool)
        mask[list(self.sites)] = True
        return mask


def region_from_mask(lattice, mask, name: str = "region", points=None) -> Region:
    """Region from a boolean site mask or a geometric predicate.

    ``points`` gives the physical coordinate of every lattice site; it
    defaults to the lattice coordinates.
    """
    pts = lattice.coords() if points is None else np.asarray(points)
    sel = mask(pts) if callable(mask) else np.asarray(mask, dtype=bool)
    if sel.shape != (lattice.count,):
        raise UsageError(f"mask has shape {sel.shape}, lattice has {lattice.count} sites", where="markov.region_from_mask")
    sites = np.nonzero(sel)[0]
    if sites.size == 0:
        raise UsageError(f"region {name!r} selects no sites", where="markov.region_from_mask")
    return Region(sites, name, pts[sites])


def slice_region(lattice, sigma: int, name=None) -> Region:
    sites = lattice.slice_sites(sigma)
    return Region(sites, name or f"slice{sigma}", lattice.coords()[sites])


def read_region_file(path, lattice, name=None) -> Region:
    """Line-oriented list of site indices (blank lines and ``#`` comments skipped)."""
    from pathlib import Path

    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    sites = sorted({int(ln) for ln in lines if ln and not ln.startswith("#")})
    if any(s < 0 or s >= lattice.count for s in sites):
        raise UsageError(f"{path}: site index out of range", where="markov.region_from_mask")
    return Region(np.array(sites, dtype=np.int64), name or Path(path).stem, lattice.coords()[sites])


class Projector:
    """e_Λ, applied by solving the region Gram system ``G_ΛΛ c = (<delta_i, f>_N)_{i in Λ}``."""

    def __init__(self, region: Region, space: NSpace):
        self.region = region
        self.space = space
        self.gram = space.gram(region.sites, region.sites)
        try:
            self.factor = cholesky(self.gram)
        except NumericError as exc:
            raise NumericError(f"region {region.name!r}: Gram factorization failed", where="markov.projector") from exc

    def coefficients(self, f) -> np.ndarray:
        return cho_solve(self.factor, self.space.dual(f)[self.region.sites])

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f)
        out = np.zeros(self.space.size, dtype=np.result_type(f, float))
        out[self.region.sites] = self.coefficients(f)
        return out

    __call__ = apply

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense site-space matrix of e_Λ (only for small lattices)."""
        sp_ = self.space
        P = np.zeros((sp_.size, sp_.size))
        P[self.region.sites, :] = cho_solve(self.factor, sp_.gram(self.region.sites, np.arange(sp_.size)))
        return P


def projector(region: Region, space: NSpace) -> Projector:
    return Projector(region, space)


def _top_singular(X, gram_in, gram_out_solve, factor_in, *, rtol, atol=1e-30, seed=0, where=None):
    """Largest singular value of a coefficient map between Gram spaces.

    Coefficient map b -> G_out^{-1} X b from (C^k, gram_in) to (C^j, G_out);
    its squared norm is the top eigenvalue of G_in^{-1} X^H G_out^{-1} X.
    """
    def apply(v):
        return cho_solve(factor_in, X.conj().T @ gram_out_solve(X @ v))

    lam, _ = power_iteration(apply, gram_in, gram_in.shape[0], rtol=rtol, atol=atol, seed=seed, where=where)
    return float(np.sqrt(lam))


def markov_residual(A: Region, C: Region, B: Region, space: NSpace, *, rtol=1e-12, seed=0) -> float:
    """||e_A e_C e_B - e_A e_B|| restricted to N_B."""
    G_AA = space.gram(A.sites, A.sites)
    G_CC = space.gram(C.sites, C.sites)
    G_BB = space.gram(B.sites, B.sites)
    G_AC = space.gram(A.sites, C.sites)
    G_CB = space.gram(C.sites, B.sites)
    G_AB = space.gram(A.sites, B.sites)
    fA, fB, fC = cholesky(G_AA), cholesky(G_BB), cholesky(G_CC)
    X = G_AC @ cho_solve(fC, G_CB) - G_AB
    if not np.any(X):
        return 0.0
    # absolute floor: residuals are compared against 1e-8, so 1e-12 resolution suffices
    return _top_singular(
        X, G_BB, lambda y: cho_solve(fA, y), fB, rtol=rtol, atol=1e-24, seed=seed, where="markov.markov_residual"
    )


def separation_check(A: Region, B: Region, C: Region, graph: sp.spmatrix) -> bool:
    """True iff every graph path from A\\C to B\\C meets C."""
    n = graph.shape[0]
    inC = np.zeros(n, dtype=bool)
    inC[C.sites] = True
    a = A.sites[~inC[A.sites]]
    b = B.sites[~inC[B.sites]]
    if a.size == 0 or b.size == 0:
        return True
    keep = np.nonzero(~inC)[0]
    sub = graph.tocsr()[keep][:, keep]
    _, labels = connected_components(sub, directed=False)
    pos = np.full(n, -1)
    pos[keep] = np.arange(keep.size)
    return not np.intersect1d(labels[pos[a]], labels[pos[b]]).size


def cross_norm(L1: Region, L2: Region, space: NSpace, *, rtol=1e-8, maxiter=10000, seed=0) -> float:
    """||e_L1 e_L2||_N by power iteration on e_L2 e_L1 e_L2 restricted to N_L2."""
    G11 = space.gram(L1.sites, L1.sites)
    G22 = space.gram(L2.sites, L2.sites)
    G12 = space.gram(L1.sites, L2.sites)
    f1, f2 = cholesky(G11), cholesky(G22)

    def apply(v):
        return cho_solve(f2, G12.conj().T @ cho_solve(f1, G12 @ v))

    lam, _ = power_iteration(apply, G22, L2.size, rtol=rtol, maxiter=maxiter, seed=seed, where="markov.cross_norm")
    return float(np.sqrt(lam))
