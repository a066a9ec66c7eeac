"""Box lattices and metric fields sampled on them.

Axis 0 is always the distinguished time direction.  Sites are numbered in
C order, so a time slice is a contiguous block of ``prod(shape[1:])`` sites.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError, MetricError

FAMILIES = ("flat", "diagonal-stationary", "conformal", "curve-induced", "tabulated")
STATIONARY_FAMILIES = ("flat", "diagonal-stationary", "curve-induced")


@dataclass(frozen=True)
class Lattice:
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def slice_size(self) -> int:
        return int(np.prod(self.shape[1:]))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, i) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(i, self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def coords(self) -> np.ndarray:
        """Site coordinates, shape ``(count, dim)``."""
        grids = np.meshgrid(*[self.axis_coords(a) for a in range(self.dim)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def slice_sites(self, sigma: int) -> np.ndarray:
        n = self.slice_size
        return np.arange(sigma * n, (sigma + 1) * n)

    def time_of(self, sites) -> np.ndarray:
        return np.asarray(sites) // self.slice_size


def build_lattice(shape, spacing, origin=None) -> Lattice:
    shape = tuple(int(s) for s in shape)
    spacing = tuple(float(h) for h in spacing)
    if len(shape) not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {len(shape)}", where="lattice.build_lattice")
    if len(spacing) != len(shape):
        raise ConfigurationError("spacing length differs from shape length", where="lattice.build_lattice")
    origin = tuple(0.0 for _ in shape) if origin is None else tuple(float(o) for o in origin)
    if len(origin) != len(shape):
        raise ConfigurationError("origin length differs from shape length", where="lattice.build_lattice")
    for axis, (n, h) in enumerate(zip(shape, spacing)):
        if n < 3:
            raise ConfigurationError(f"axis {axis}: shape {n} < 3", where="lattice.build_lattice")
        if not h > 0:
            raise ConfigurationError(f"axis {axis}: spacing {h} is not positive", where="lattice.build_lattice")
    return Lattice(shape, spacing, origin)


@dataclass(frozen=True)
class MetricSpec:
    family: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown metric family {self.family!r}", where="lattice.MetricSpec")

    @property
    def stationary(self) -> bool:
        if self.family in STATIONARY_FAMILIES:
            return True
        if self.family == "conformal":
            return not self.parameters.get("time_dependent", False)
        return False


@dataclass(frozen=True, eq=False)
class MetricField:
    lattice: Lattice
    g: np.ndarray
    sqrt_det: np.ndarray
    inverse: np.ndarray
    spec: MetricSpec | None = None

    def at(self, multi) -> np.ndarray:
        return self.g[self.lattice.index(multi)]

    def is_time_independent(self) -> bool:
        gt = self.g.reshape(self.lattice.shape[0], self.lattice.slice_size, *self.g.shape[1:])
        return bool(np.all(gt == gt[:1]))


def _spatial_profile(value, lattice: Lattice, name: str) -> np.ndarray:
    """Broadcast a scalar or a spatial-grid array to one value per site."""
    arr = np.asarray(value, dtype=float)
    spatial = lattice.shape[1:]
    if arr.ndim == 0:
        return np.full(lattice.count, float(arr))
    if arr.shape == spatial:
        return np.broadcast_to(arr, lattice.shape).ravel().copy()
    if arr.shape == lattice.shape:
        return arr.ravel().copy()
    raise InputError(
        f"{name}: shape {arr.shape} matches neither spatial grid {spatial} nor lattice {lattice.shape}",
        where="lattice.sample_metric",
    )


def curve_slopes(vertices, xi) -> np.ndarray:
    """dγ¹/dγ² of a polyline graph t = γ¹(x), evaluated at ``xi``.

    Points exactly on an interior vertex get the mean of the adjacent slopes.
    Outside the polyline's x-range the end segments are extended.
    """
    v = np.asarray(vertices, dtype=float)
    dx = np.diff(v[:, 1])
    slopes = np.diff(v[:, 0]) / dx
    xi = np.asarray(xi, dtype=float)
    seg = np.clip(np.searchsorted(v[:, 1], xi, side="right") - 1, 0, len(slopes) - 1)
    out = slopes[seg].copy()
    on_vertex = np.isclose(xi[:, None], v[1:-1, 1][None, :], rtol=0, atol=1e-12)
    rows, k = np.nonzero(on_vertex)
    out[rows] = 0.5 * (slopes[k] + slopes[k + 1])
    return out


def induced_metric(slope) -> np.ndarray:
    """Metric of the chart t = σ + γ¹(ξ), x = ξ, for tangent slope dγ¹/dξ."""
    s = np.asarray(slope, dtype=float)
    g = np.empty(s.shape + (2, 2))
    g[..., 0, 0] = 1.0
    g[..., 0, 1] = g[..., 1, 0] = s
    g[..., 1, 1] = s * s + 1.0
    return g


def read_tabulated(path, lattice: Lattice) -> np.ndarray:
    """Read a tabulated metric file.

    Header line: ``dim,n0,n1[,n2]``.  Then one line per site in site-index
    order holding the upper triangle of g (row-major), comma-separated.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"tabulated metric file {path} not found", where="lattice.sample_metric")
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        header = [int(float(t)) for t in lines[0].split(",")]
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: unreadable header", where="lattice.sample_metric") from exc
    dim, shape = header[0], tuple(header[1:])
    if dim != lattice.dim or shape != lattice.shape:
        raise InputError(
            f"{path}: file is dim {dim} shape {shape}, lattice is dim {lattice.dim} shape {lattice.shape}",
            where="lattice.sample_metric",
        )
    d = lattice.dim
    iu = np.triu_indices(d)
    rows = lines[1:]
    if len(rows) != lattice.count:
        raise InputError(f"{path}: {len(rows)} records for {lattice.count} sites", where="lattice.sample_metric")
    g = np.empty((lattice.count, d, d))
    for i, line in enumerate(rows):
        try:
            vals = np.array([float(t) for t in line.split(",")])
        except ValueError as exc:
            raise InputError(f"{path}: bad record for site {i}", where="lattice.sample_metric") from exc
        if vals.size != len(iu[0]):
            raise InputError(f"{path}: site {i} has {vals.size} entries", where="lattice.sample_metric")
        g[i][iu] = vals
        g[i].T[iu] = vals
    return g


def write_tabulated(path, metric: MetricField) -> None:
    lat = metric.lattice
    iu = np.triu_indices(lat.dim)
    lines = [",".join(str(v) for v in (lat.dim, *lat.shape))]
    for gi in metric.g:
        lines.append(",".join(f"{v:.17g}" for v in gi[iu]))
    Path(path).write_text("\n".join(lines) + "\n")


def sample_metric(spec: MetricSpec, lattice: Lattice) -> MetricField:
    d, n = lattice.dim, lattice.count
    p = spec.parameters
    if spec.family == "flat":
        g = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    elif spec.family == "diagonal-stationary":
        diag = p.get("diag")
        if diag is None or len(diag) != d:
            raise ConfigurationError(f"diagonal-stationary needs {d} diagonal profiles", where="lattice.sample_metric")
        g = np.zeros((n, d, d))
        for a in range(d):
            arr = np.asarray(diag[a], dtype=float)
            if arr.shape == lattice.shape:
                raise ConfigurationError("diagonal-stationary profiles must not depend on time", where="lattice.sample_metric")
            g[:, a, a] = _spatial_profile(arr, lattice, f"diag[{a}]")
    elif spec.family == "conformal":
        phi = _spatial_profile(p.get("phi", 0.0), lattice, "phi")
        g = np.exp(2.0 * phi)[:, None, None] * np.eye(d)
    elif spec.family == "curve-induced":
        if d != 2:
            raise ConfigurationError("curve-induced metrics are two dimensional", where="lattice.sample_metric")
        if "slope" in p:
            s = np.full(n, float(p["slope"]))
        else:
            verts = np.asarray(p["vertices"], dtype=float)
            xi = lattice.coords()[:, 1]
            s = curve_slopes(verts, xi)
        g = induced_metric(s)
    else:
        g = read_tabulated(p["path"], lattice)
    return make_metric_field(lattice, g, spec)


def make_metric_field(lattice: Lattice, g, spec: MetricSpec | None = None) -> MetricField:
    g = np.asarray(g, dtype=float)
    d = lattice.dim
    if g.shape != (lattice.count, d, d):
        raise InputError(f"metric array shape {g.shape} != {(lattice.count, d, d)}", where="lattice.sample_metric")
    if not np.all(np.isfinite(g)):
        bad = int(np.argwhere(~np.isfinite(g).all(axis=(1, 2)))[0, 0])
        raise MetricError(f"non-finite metric at site {bad}", where="lattice.sample_metric", site=bad)
    if not np.array_equal(g, np.swapaxes(g, 1, 2)):
        bad = int(np.argwhere(~(g == np.swapaxes(g, 1, 2)).all(axis=(1, 2)))[0, 0])
        raise MetricError(f"metric not symmetric at site {bad}", where="lattice.sample_metric", site=bad)
    lam = np.linalg.eigvalsh(g)[:, 0]
    if np.any(lam <= 0):
        bad = int(np.argmax(lam <= 0))
        raise MetricError(
            f"metric not positive definite at site {bad} {lattice.multi_index(bad)} (lambda_min={lam[bad]:.3g})",
            where="lattice.sample_metric",
            site=bad,
        )
    sqrt_det = np.sqrt(np.linalg.det(g))
    inverse = np.linalg.inv(g)
    inverse = 0.5 * (inverse + np.swapaxes(inverse, 1, 2))
    return MetricField(lattice, g, sqrt_det, inverse, spec)


def check_stable_positivity(metric: MetricField, epsilon: float) -> dict:
    """Sufficient test for stable positivity at level ``epsilon``.

    Any symmetric perturbation with entries bounded by epsilon has spectral
    norm at most ``dim * epsilon``, so ``lambda_min(g) > dim * epsilon`` at
    every site guarantees positivity of every perturbed metric.
    """
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}", where="lattice.check_stable_positivity")
    lam = np.linalg.eigvalsh(metric.g)[:, 0]
    bound = metric.lattice.dim * epsilon
    bad = np.nonzero(lam <= bound)[0]
    if bad.size:
        i = int(bad[0])
        return {"pass": False, "site": i, "lambda_min": float(lam[i]), "threshold": bound}
    return {"pass": True, "site": None, "lambda_min": float(lam.min()), "threshold": bound}


def measure_weights(metric: MetricField) -> np.ndarray:
    return metric.sqrt_det * metric.lattice.cell_volume
