"""Power iteration in Gram inner products, plus dense reference norms."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sl

from .errors import NumericError


def power_iteration(apply, gram, dim, *, rtol=1e-10, atol=1e-30, maxiter=10000, seed=0, where="spectral.power_iteration"):
    """Largest eigenvalue of an operator self-adjoint and PSD in ``<u, v> = u^H gram v``.

    ``apply`` maps a coefficient vector to its image.  Iteration stops when the
    Rayleigh quotient changes by at most ``rtol * |lam| + atol``.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.sqrt(v @ (gram @ v))
    lam = np.inf
    for _ in range(maxiter):
        w = apply(v)
        lam_new = float(np.real(np.vdot(v, gram @ w)))
        nw = np.sqrt(max(float(np.real(np.vdot(w, gram @ w))), 0.0))
        if nw == 0.0:
            return 0.0, v
        if abs(lam_new - lam) <= rtol * abs(lam_new) + atol:
            return max(lam_new, 0.0), v
        lam = lam_new
        v = w / nw
    raise NumericError(f"power iteration stagnated after {maxiter} steps (last estimate {lam:.6g})", where=where, iterate=v)


def weighted_norm(M, gram_in, gram_out) -> float:
    """Dense operator norm of ``M`` from (C^k, gram_in) to (C^j, gram_out)."""
    Lin = np.linalg.cholesky(_sym(gram_in))
    Lout = np.linalg.cholesky(_sym(gram_out))
    X = Lout.T.conj() @ M @ sl.solve_triangular(Lin.conj(), np.eye(Lin.shape[0]), lower=True).T
    return float(np.linalg.norm(X, 2))


def _sym(G):
    return 0.5 * (G + G.conj().T)


def cholesky(G):
    """Cholesky factor of the symmetric part of ``G`` (lower, scipy cho_factor form)."""
    try:
        return sl.cho_factor(_sym(G), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError("Gram matrix is not positive definite", where="spectral.cholesky") from exc


def cho_solve(factor, b):
    return sl.cho_solve(factor, b, check_finite=False)
