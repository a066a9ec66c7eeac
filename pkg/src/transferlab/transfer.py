"""Propagators between time slices and the stationary transfer semigroup.

``U_{target, source} = j_target^* j_source`` has matrix
``S_target^{-1} S_{target, source}`` where ``S`` are slice Grams and the
cross block pairs the two slices through E with slice measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError
from .lattice import MetricField
from .nspace import NSpace, SliceSpace, slice_space
from .spectral import power_iteration

INTERIOR_MARGIN = 2
MODULUS_FLOOR = 1e-13
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Propagator:
    source: SliceSpace
    target: SliceSpace
    matrix: np.ndarray

    @property
    def source_sigma(self) -> int:
        return self.source.sigma

    @property
    def target_sigma(self) -> int:
        return self.target.sigma

    @property
    def tau(self) -> float:
        return abs(self.target.sigma - self.source.sigma) * self.source.space.h0

    def __call__(self, psi):
        return self.matrix @ psi


@dataclass
class SpectralReport:
    tau: float
    norm: float
    rate: float
    omega_max: float
    eigenvalues: np.ndarray | None = None
    symmetry_residual: float = float("nan")
    source_sigma: int = -1
    target_sigma: int = -1
    extra: dict = field(default_factory=dict)

    @property
    def min_re_spectrum(self) -> float:
        if self.eigenvalues is None:
            return float("nan")
        return float(np.min(self.eigenvalues.real))

    @property
    def max_imag(self) -> float:
        if self.eigenvalues is None:
            return float("nan")
        return float(np.max(np.abs(self.eigenvalues.imag)))

    def row(self) -> dict:
        return {
            "tau": self.tau,
            "norm": self.norm,
            "rate": self.rate,
            "omega_max": self.omega_max,
            "min_re_spectrum": self.min_re_spectrum,
            "symmetry_residual": self.symmetry_residual,
        }


def cross_gram(target: SliceSpace, source: SliceSpace) -> np.ndarray:
    space = target.space
    return target.nu[:, None] * space.kernel.block(target.sites, source.sites) * source.nu[None, :]


def propagator(source: int, target: int, space: NSpace) -> Propagator:
    src = slice_space(source, space)
    tgt = slice_space(target, space)
    try:
        U = tgt.solve(cross_gram(tgt, src))
    except NumericError as exc:
        raise NumericError(f"slice {target}: Gram solve failed", where="transfer.propagator") from exc
    return Propagator(src, tgt, U)


def _norm_between(M, source: SliceSpace, target: SliceSpace, rtol, seed) -> float:
    if not np.any(M):
        return 0.0

    def apply(v):
        return source.solve(M.conj().T @ (target.gram @ (M @ v)))

    lam, _ = power_iteration(apply, source.gram, source.size, rtol=rtol, seed=seed, where="transfer.operator_norm")
    return float(np.sqrt(lam))


def operator_norm(p: Propagator, *, rtol=1e-12, seed=0) -> float:
    """Norm from N_source to N_target, by power iteration on the Gram-symmetrized product."""
    return _norm_between(p.matrix, p.source, p.target, rtol, seed)


def composition_residual(s1: int, s2: int, s3: int, space: NSpace, *, seed=0) -> dict:
    """||U_{s1,s2} U_{s2,s3} - U_{s1,s3}|| as a map N_{s3} -> N_{s1}."""
    if len({s1, s2, s3}) != 3:
        raise UsageError("composition needs three distinct slices", where="transfer.composition_residual")
    U12 = propagator(s2, s1, space)
    U23 = propagator(s3, s2, space)
    U13 = propagator(s3, s1, space)
    D = U12.matrix @ U23.matrix - U13.matrix
    res = _norm_between(D, U13.source, U13.target, 1e-10, seed) if np.any(D) else 0.0
    return {"residual": res, "ordered": min(s1, s3) < s2 < max(s1, s3)}


def symmetrized_transfer(p: Propagator) -> np.ndarray:
    """Ũ in the sqrt(nu)-orthonormal frame of L²(dμ).

    Uses the target slice's square root on the left and the source slice's
    on the right, so the ordinary spectral norm equals the N-norm of ``p``.
    """
    md = p.source.space.metric
    if not md.is_time_independent():
        raise UsageError("symmetrized transfer needs a time-independent metric", where="transfer.symmetrized_transfer")
    rs = np.sqrt(p.source.nu)
    rt = np.sqrt(p.target.nu)
    return p.target.frame_sqrt() @ (rt[:, None] * p.matrix / rs[None, :]) @ p.source.frame_sqrt(inverse=True)


def reconstruct(p: Propagator, tilde: np.ndarray) -> np.ndarray:
    """``(Ê_t^{1/2})† Ũ Ê_s^{1/2}`` mapped back from the frame; should equal ``p.matrix``."""
    rs = np.sqrt(p.source.nu)
    rt = np.sqrt(p.target.nu)
    core = p.target.frame_sqrt(inverse=True) @ tilde @ p.source.frame_sqrt()
    return core * (rs[None, :] / rt[:, None])


def symmetry_residual(tilde: np.ndarray) -> float:
    return float(np.linalg.norm(tilde - tilde.T, 2) / np.linalg.norm(tilde, 2))


def omega_max(metric: MetricField, m: float) -> float:
    return float(m / np.sqrt(np.max(metric.inverse[:, 0, 0])))


def interior_window(space: NSpace, margin: int = INTERIOR_MARGIN) -> range:
    return range(margin, space.nt - margin)


def centered_pair(k: int, space: NSpace) -> tuple[int, int]:
    """Slices ``(s, s + k)`` placed symmetrically about the box's time center."""
    s = (space.nt - 1 - k) // 2
    return s, s + k


def steps_for(tau: float, space: NSpace) -> int:
    k = tau / space.h0
    if k <= 0 or abs(k - round(k)) > 1e-9:
        raise UsageError(f"tau={tau} is not a positive multiple of the time spacing {space.h0}", where="transfer.decay_rate")
    return int(round(k))


def generator_spectrum(p: Propagator, tau: float | None = None) -> SpectralReport:
    """Spectrum of K̃ = -log(Ũ)/tau from the eigenvalues of Ũ (principal branch)."""
    tau = p.tau if tau is None else tau
    space = p.source.space
    tilde = symmetrized_transfer(p)
    sym = symmetry_residual(tilde)
    if sym <= SYMMETRY_TOL:
        lam = np.linalg.eigvalsh(0.5 * (tilde + tilde.T)).astype(complex)
        normal = True
    else:
        lam = np.linalg.eigvals(tilde)
        normal = False
    mod = np.abs(lam)
    if mod.min() <= MODULUS_FLOOR * mod.max():
        raise NumericError(
            f"transfer eigenvalue modulus {mod.min():.3e} below floor {MODULUS_FLOOR:.0e} * {mod.max():.3e}",
            where="transfer.generator_spectrum",
        )
    gen = -np.log(lam) / tau
    gen = gen[np.argsort(gen.real, kind="stable")]
    nrm = float(np.linalg.norm(tilde, 2))
    return SpectralReport(
        tau=tau,
        norm=nrm,
        rate=-np.log(nrm) / tau,
        omega_max=omega_max(space.metric, space.mass),
        eigenvalues=gen,
        symmetry_residual=sym,
        source_sigma=p.source_sigma,
        target_sigma=p.target_sigma,
        extra={"normal": normal, "negative_transfer_eigenvalues": int(np.sum(lam.real < 0))},
    )


def decay_rate(taus, space: NSpace, *, with_spectrum: bool = True) -> list[SpectralReport]:
    """Norm and rate of U_tau on centered interior slices for each tau."""
    if not space.metric.is_time_independent():
        raise UsageError("decay rates need a time-independent metric", where="transfer.decay_rate")
    window = interior_window(space)
    om = omega_max(space.metric, space.mass)
    reports = []
    for tau in taus:
        k = steps_for(tau, space)
        s, t = centered_pair(k, space)
        if s not in window or t not in window:
            raise UsageError(f"tau={tau}: slices {s},{t} leave the interior window", where="transfer.decay_rate")
        p = propagator(s, t, space)
        nrm = operator_norm(p)
        rep = SpectralReport(tau=float(tau), norm=nrm, rate=-np.log(nrm) / tau, omega_max=om, source_sigma=s, target_sigma=t)
        if with_spectrum:
            try:
                spec = generator_spectrum(p, tau)
                rep.eigenvalues = spec.eigenvalues
                rep.symmetry_residual = spec.symmetry_residual
                rep.extra.update(spec.extra)
            except NumericError as exc:
                rep.extra["spectrum_error"] = str(exc)
        reports.append(rep)
    return reports


def generator_tau(taus, space: NSpace) -> float:
    """Smallest tau in ``taus`` spanning an even number of time steps.

    Over an odd number of steps the Q1 transfer matrix has negative
    eigenvalues (high transverse modes alternate in sign), so its principal
    logarithm is not real even for reflection-symmetric metrics.
    """
    even = [t for t in taus if steps_for(t, space) % 2 == 0]
    if not even:
        raise UsageError("no tau spans an even number of time steps", where="transfer.generator_spectrum")
    return min(even)


def reflection_invariant(metric: MetricField, s: int, t: int) -> bool:
    """Exact test that the metric (and box) is invariant under time reflection about (s + t) / 2."""
    lat = metric.lattice
    nt = lat.shape[0]
    if s + t != nt - 1:
        return False
    g = metric.g.reshape(nt, lat.slice_size, lat.dim, lat.dim)
    flip = np.ones((lat.dim, lat.dim))
    flip[0, 1:] = flip[1:, 0] = -1.0
    return bool(np.array_equal(g[::-1] * flip, g))


def self_adjointness_check(metric: MetricField, p: Propagator) -> dict:
    inv = reflection_invariant(metric, p.source_sigma, p.target_sigma)
    res = symmetry_residual(symmetrized_transfer(p))
    return {"symmetric": inv, "residual": res}


def stationarity_residual(k: int, sigmas, space: NSpace) -> float:
    """Max difference between U_{sigma, sigma + k} over the given source slices."""
    mats = [propagator(s, s + k, space).matrix for s in sigmas]
    ref = mats[0]
    return float(max(np.linalg.norm(M - ref, 2) for M in mats) / np.linalg.norm(ref, 2))


def semigroup_residual(k1: int, k2: int, space: NSpace) -> float:
    """||U_{k1} U_{k2} - U_{k1 + k2}|| with all three as stationary matrices on centered slices."""
    s, t = centered_pair(k1 + k2, space)
    U1 = propagator(s, s + k1, space).matrix
    U2 = propagator(s + k1, t, space).matrix
    U12 = propagator(s, t, space)
    # U_{t, s+k1} U_{s+k1, s} in target <- source order
    D = U2 @ U1 - U12.matrix
    return _norm_between(D, U12.source, U12.target, 1e-10, 0)
