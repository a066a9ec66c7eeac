"""Curve-adapted coordinates and the region decoupling estimate.

A polyline graph ``t = γ¹(x)`` defines the chart ``t = σ + γ¹(ξ), x = ξ``.
The chart lattice is a product grid in (σ, ξ) carrying the induced metric
``[[1, s], [s, 1 + s²]]`` with ``s = dγ¹/dξ``, so ``g'^{σσ} = 1 + s² = 1/cos²θ``.
Regions are given in the original (t, x) coordinates and pulled back to the
chart lattice through the physical position of every chart site.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble_helmholtz, green_kernel
from .errors import GeometryError, InputError, UsageError
from .lattice import Lattice, MetricSpec, build_lattice, induced_metric, sample_metric
from .markov import Region, cross_norm, region_from_mask, slice_region
from .nspace import NSpace
from .transfer import INTERIOR_MARGIN, operator_norm, propagator

CHAIN_RTOL = 1e-14
COS_FLOOR = 1e-8


def rotate(points, phi: float) -> np.ndarray:
    """Rotate (t, x) points counter-clockwise by ``phi`` radians."""
    c, s = np.cos(phi), np.sin(phi)
    R = np.array([[c, -s], [s, c]])
    return np.asarray(points, dtype=float) @ R.T


@dataclass(frozen=True, eq=False)
class CurveChart:
    vertices: np.ndarray  # (k, 2) rows (γ¹, γ²) in the rotated frame, γ² increasing
    rotation: float = 0.0

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def slopes(self) -> np.ndarray:
        d = self.deltas
        return d[:, 0] / d[:, 1]

    @property
    def theta(self) -> np.ndarray:
        d = self.deltas
        return np.arctan2(d[:, 0], d[:, 1])

    @property
    def cos(self) -> np.ndarray:
        return np.abs(np.cos(self.theta))

    @property
    def min_cos(self) -> float:
        return float(self.cos.min())

    def segment_metrics(self) -> np.ndarray:
        return induced_metric(self.slopes)

    def spec(self) -> MetricSpec:
        return MetricSpec("curve-induced", {"vertices": self.vertices.tolist()})

    def gamma1(self, xi) -> np.ndarray:
        """γ¹ at ``xi``; end segments are extended linearly."""
        v = self.vertices
        xi = np.asarray(xi, dtype=float)
        s = self.slopes
        out = np.interp(xi, v[:, 1], v[:, 0])
        lo = xi < v[0, 1]
        hi = xi > v[-1, 1]
        out[lo] = v[0, 0] + s[0] * (xi[lo] - v[0, 1])
        out[hi] = v[-1, 0] + s[-1] * (xi[hi] - v[-1, 1])
        return out

    def segments_within(self, xi_lo: float, xi_hi: float) -> np.ndarray:
        """Indices of segments (end segments extended) meeting [xi_lo, xi_hi]."""
        x = self.vertices[:, 1]
        left = np.concatenate([[-np.inf], x[1:-1]])
        right = np.concatenate([x[1:-1], [np.inf]])
        return np.nonzero((right >= xi_lo) & (left <= xi_hi))[0]

    def min_cos_within(self, xi_lo: float, xi_hi: float) -> float:
        return float(self.cos[self.segments_within(xi_lo, xi_hi)].min())

    def to_chart(self, points) -> np.ndarray:
        """(t, x) in original coordinates -> (σ, ξ)."""
        p = rotate(points, self.rotation)
        return np.column_stack([p[:, 0] - self.gamma1(p[:, 1]), p[:, 1]])

    def to_physical(self, chart_points) -> np.ndarray:
        """(σ, ξ) -> (t, x) in original coordinates."""
        q = np.asarray(chart_points, dtype=float)
        p = np.column_stack([q[:, 0] + self.gamma1(q[:, 1]), q[:, 1]])
        return rotate(p, -self.rotation)


def build_chart(polyline, rotation: float = 0.0) -> CurveChart:
    v = np.asarray(polyline, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
        raise GeometryError("polyline needs at least two (t, x) vertices", where="curvecoords.build_chart")
    if not np.all(np.isfinite(v)):
        raise GeometryError("polyline has non-finite vertices", where="curvecoords.build_chart")
    v = rotate(v, rotation)
    dx = np.diff(v[:, 1])
    if np.all(dx < 0):
        v = v[::-1]
        dx = -dx[::-1]
    bad = np.nonzero(dx <= 0)[0]
    if bad.size:
        k = int(bad[0])
        raise GeometryError(
            f"x is not strictly monotone along the curve at segment {k} ({v[k].tolist()} -> {v[k + 1].tolist()})",
            where="curvecoords.build_chart",
        )
    # dx can be positive by rounding alone when a segment is (nearly) vertical
    cos = np.abs(dx) / np.hypot(dx, np.diff(v[:, 0]))
    flat = np.nonzero(cos < COS_FLOOR)[0]
    if flat.size:
        k = int(flat[0])
        raise GeometryError(
            f"segment {k} is vertical in the chart frame (|cos theta|={cos[k]:.3g})", where="curvecoords.build_chart"
        )
    return CurveChart(v, float(rotation))


def read_curve_file(path) -> np.ndarray:
    """Ordered vertex list, one ``t x`` pair per line."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"curve file {path} not found", where="curvecoords.read_curve_file")
    rows = []
    for k, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InputError(f"{path}:{k}: expected 't x'", where="curvecoords.read_curve_file")
        try:
            rows.append([float(parts[0]), float(parts[1])])
        except ValueError as exc:
            raise InputError(f"{path}:{k}: {exc}", where="curvecoords.read_curve_file") from exc
    return np.array(rows)


def chart_g11_sup(chart: CurveChart) -> float:
    return 1.0 / chart.min_cos**2


def map_regions(L1: Region, L2: Region, chart: CurveChart) -> tuple[float, float]:
    """(α, β): the last chart time of ``L1`` and the first of ``L2``."""
    if L1.points is None or L2.points is None:
        raise UsageError("regions need physical coordinates", where="curvecoords.map_regions")
    alpha = float(chart.to_chart(L1.points)[:, 0].max())
    beta = float(chart.to_chart(L2.points)[:, 0].min())
    if not beta > alpha:
        raise GeometryError(
            f"curve does not pass between the regions (alpha={alpha:.6g} >= beta={beta:.6g})",
            where="curvecoords.map_regions",
        )
    return alpha, beta


def decoupling_bound(m: float, alpha: float, beta: float, min_cos: float) -> float:
    if not m > 0:
        raise UsageError(f"mass must be positive, got {m}", where="curvecoords.decoupling_bound")
    if not beta > alpha:
        raise UsageError(f"need beta > alpha, got {alpha}, {beta}", where="curvecoords.decoupling_bound")
    if not 0 < min_cos <= 1:
        raise UsageError(f"min_cos must lie in (0, 1], got {min_cos}", where="curvecoords.decoupling_bound")
    return float(np.exp(-m * (beta - alpha) * min_cos))


@dataclass
class DecouplingReport:
    alpha: float
    beta: float
    min_cos: float
    bound: float
    direct: float
    e_alpha_e_beta: float
    U_norm: float
    rotation: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.direct

    @property
    def chain_residual(self) -> float:
        return abs(self.e_alpha_e_beta - self.U_norm)

    def row(self) -> dict:
        return {
            "rotation": self.rotation,
            "alpha": self.alpha,
            "beta": self.beta,
            "min_cos": self.min_cos,
            "bound": self.bound,
            "direct": self.direct,
            "margin": self.margin,
            "e_alpha_e_beta": self.e_alpha_e_beta,
            "U_norm": self.U_norm,
        }


@dataclass(frozen=True, eq=False)
class ChartSetup:
    chart: CurveChart
    lattice: Lattice
    space: NSpace
    points: np.ndarray  # physical (t, x) of every chart site


def chart_space(chart: CurveChart, lattice: Lattice, m: float) -> ChartSetup:
    """Chart lattice in (σ, ξ), the induced metric on it, and its N space."""
    metric = sample_metric(chart.spec(), lattice)
    op = assemble_helmholtz(lattice, metric, m)
    pts = chart.to_physical(lattice.coords())
    return ChartSetup(chart, lattice, NSpace(green_kernel(op)), pts)


def _slice_index(lattice: Lattice, sigma: float) -> int:
    k = (sigma - lattice.origin[0]) / lattice.spacing[0]
    if abs(k - round(k)) > 1e-9:
        raise GeometryError(f"sigma={sigma} is not a lattice slice", where="curvecoords.decoupling_experiment")
    return int(round(k))


def decoupling_experiment(L1, L2, setup: ChartSetup, m: float | None = None) -> DecouplingReport:
    """Bound and direct norm for regions given as predicates (or Regions) on physical points."""
    lat, space, chart = setup.lattice, setup.space, setup.chart
    m = space.mass if m is None else m
    if abs(m - space.mass) > 1e-15:
        raise UsageError("mass differs from the mass of the chart operator", where="curvecoords.decoupling_experiment")
    R1 = L1 if isinstance(L1, Region) else region_from_mask(lat, L1, "L1", points=setup.points)
    R2 = L2 if isinstance(L2, Region) else region_from_mask(lat, L2, "L2", points=setup.points)
    alpha, beta = map_regions(R1, R2, chart)
    a, b = _slice_index(lat, alpha), _slice_index(lat, beta)
    nt = lat.shape[0]
    if min(a, b) < INTERIOR_MARGIN or max(a, b) > nt - 1 - INTERIOR_MARGIN:
        raise GeometryError(
            f"separating lines (slices {a}, {b}) leave the interior window", where="curvecoords.decoupling_experiment"
        )
    xi = lat.axis_coords(1)
    min_cos = chart.min_cos_within(xi[0], xi[-1])
    bound = decoupling_bound(m, alpha, beta, min_cos)
    direct = cross_norm(R1, R2, space)
    ea_eb = cross_norm(slice_region(lat, a), slice_region(lat, b), space, rtol=CHAIN_RTOL)
    u = operator_norm(propagator(b, a, space), rtol=CHAIN_RTOL)
    return DecouplingReport(
        alpha, beta, min_cos, bound, direct, ea_eb, u, chart.rotation, {"L1_sites": R1.size, "L2_sites": R2.size}
    )


def rotation_scan(polyline, L1, L2, lattice: Lattice, m: float, angles) -> list[DecouplingReport]:
    """Decoupling reports over pre-rotations; angles whose chart or regions are invalid are skipped."""
    out = []
    for phi in angles:
        try:
            chart = build_chart(polyline, phi)
            out.append(decoupling_experiment(L1, L2, chart_space(chart, lattice, m)))
        except GeometryError:
            continue
    if not out:
        raise GeometryError("no rotation in the scan gives a valid chart", where="curvecoords.rotation_scan")
    return out


def best_rotation(reports) -> DecouplingReport:
    return min(reports, key=lambda r: (r.bound, r.rotation))


def chart_lattice(shape, spacing, origin) -> Lattice:
    return build_lattice(shape, spacing, origin)
