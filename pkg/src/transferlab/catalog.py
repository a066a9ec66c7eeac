"""Named test instances: lattices, metrics, region triples and decoupling geometries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import assemble_helmholtz, green_kernel
from .lattice import Lattice, MetricSpec, build_lattice, sample_metric
from .markov import Region, Union, half_space, rectangle, region_from_mask
from .nspace import NSpace


@dataclass(frozen=True)
class MetricEntry:
    name: str
    spec: MetricSpec
    mass: float


def x_profile(n: int, spacing: float, origin: float, amp: float = 0.3, period: float = 16.0) -> np.ndarray:
    """Smooth positive spatial profile ``1 + amp sin²(pi x / period)``."""
    x = origin + spacing * np.arange(n)
    return 1.0 + amp * np.sin(np.pi * x / period) ** 2


def rate_box(dim: int = 2) -> Lattice:
    """[0, 16]² (or a 3D box with a [0, 4]² cross-section) at spacing 0.5."""
    if dim == 2:
        return build_lattice([33, 33], [0.5, 0.5], [0.0, 0.0])
    return build_lattice([17, 9, 9], [0.5, 0.5, 0.5], [0.0, 0.0, 0.0])


def rate_metrics(lattice: Lattice) -> list[MetricEntry]:
    """Stationary catalog for the exponential bound: flat, constant g^{00} = 4, slope-c charts."""
    out = [MetricEntry(f"flat-m{m:g}", MetricSpec("flat"), m) for m in (0.5, 1.0, 2.0)]
    out.append(MetricEntry("diag-g00inv4-m2", MetricSpec("diagonal-stationary", {"diag": [0.25, 1.0]}), 2.0))
    for c in (0.5, 1.0, 2.0):
        out.append(MetricEntry(f"slope{c:g}-m1", MetricSpec("curve-induced", {"slope": c}), 1.0))
    return out


def reflection_metrics(lattice: Lattice) -> list[MetricEntry]:
    """Stationary metrics with g_{0i} = 0, hence invariant under time reflection."""
    n, h, o = lattice.shape[1], lattice.spacing[1], lattice.origin[1]
    prof = x_profile(n, h, o)
    if lattice.dim == 3:
        prof = np.broadcast_to(prof[:, None], lattice.shape[1:]).copy()
    ones = [1.0] * (lattice.dim - 1)
    return [
        MetricEntry("flat-m1", MetricSpec("flat"), 1.0),
        MetricEntry("diag-g00inv4-m2", MetricSpec("diagonal-stationary", {"diag": [0.25, *ones]}), 2.0),
        MetricEntry("diag-xdep-m1", MetricSpec("diagonal-stationary", {"diag": [prof, *([prof] + ones[1:])]}), 1.0),
    ]


def nspace_for(lattice: Lattice, spec: MetricSpec, m: float) -> NSpace:
    metric = sample_metric(spec, lattice)
    return NSpace(green_kernel(assemble_helmholtz(lattice, metric, m)))


# ---------------------------------------------------------------------------
# Markov triples on index grids
# ---------------------------------------------------------------------------

def _index_grid(lattice: Lattice):
    idx = np.indices(lattice.shape).reshape(lattice.dim, -1).T
    return idx


def markov_triples(lattice: Lattice) -> dict[str, tuple[Region, Region, Region]]:
    """Five (A, C, B) triples, each with C a cut of the cell-neighbour graph.

    Defined on site indices of a 2D lattice with at least 20 sites per axis.
    """
    n0, n1 = lattice.shape[:2]
    idx = _index_grid(lattice)
    i, j = idx[:, 0], idx[:, 1]
    mid = n0 // 2
    ci, cj = (n0 - 1) / 2, (n1 - 1) / 2
    cheb = np.maximum(np.abs(i - ci), np.abs(j - cj))
    s = i + j
    diag = n0 + n1 - 2
    masks = {
        "slabs-cut": (i <= mid - 2, i == mid, i >= mid + 2),
        "thick-cut": (i <= mid - 6, (i >= mid - 3) & (i <= mid - 1), i >= mid + 3),
        "box-ring": (cheb <= 2, (cheb > 3) & (cheb <= 4), cheb > 5),
        "column-cut": (j <= n1 // 2 - 3, j == n1 // 2 - 1, j >= n1 // 2 + 1),
        # a diagonal line alone is crossed by diagonal neighbours; two adjacent diagonals cut
        "staircase-cut": (s <= diag // 2 - 4, (s == diag // 2) | (s == diag // 2 + 1), s >= diag // 2 + 4),
    }
    out = {}
    for name, (a, c, b) in masks.items():
        out[name] = (
            region_from_mask(lattice, a, f"{name}:A"),
            region_from_mask(lattice, c, f"{name}:C"),
            region_from_mask(lattice, b, f"{name}:B"),
        )
    return out


def gap_cut(lattice: Lattice):
    """Slabs separated by a middle slice with one site removed: C does not separate."""
    idx = _index_grid(lattice)
    i, j = idx[:, 0], idx[:, 1]
    mid = lattice.shape[0] // 2
    jm = lattice.shape[1] // 2
    A = region_from_mask(lattice, i <= mid - 1, "gap:A")
    B = region_from_mask(lattice, i >= mid + 1, "gap:B")
    C = region_from_mask(lattice, (i == mid) & (j != jm), "gap:C")
    return A, C, B


# ---------------------------------------------------------------------------
# Decoupling geometries (physical coordinates)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecouplingInstance:
    name: str
    polyline: tuple
    chart_lattice: Lattice
    L1: object
    L2: object
    mass: float = 1.0


def slabs_instance(gap: float = 2.0, spacing: float = 0.5) -> DecouplingInstance:
    """Slabs t <= -gap/2 and t >= gap/2 in [-8, 8]², horizontal chart."""
    n = int(round(16 / spacing)) + 1
    lat = build_lattice([n, n], [spacing, spacing], [-8.0, -8.0])
    return DecouplingInstance(
        f"slabs-gap{gap:g}",
        ((0.0, -8.0), (0.0, 8.0)),
        lat,
        half_space(0, "<=", -gap / 2),
        half_space(0, ">=", gap / 2),
    )


STAIRCASE = ((-2.0, -10.0), (-2.0, -2.0), (2.0, 2.0), (2.0, 10.0))


def lshape_regions(shift: float = 0.0):
    """Two interlocked L shapes; ``shift`` moves Λ1 down and Λ2 up in t.

    Λ1 is a bar below the staircase with an arm rising to its right; Λ2 is a
    bar above it with an arm hanging to its left.  The convex hulls overlap,
    so no straight line separates them.
    """
    d = shift
    L1 = Union((rectangle((-5 - d, -3 - d), (-8, 4)), rectangle((-5 - d, 1 - d), (2, 4))))
    L2 = Union((rectangle((3 + d, 5 + d), (-4, 8)), rectangle((-1 + d, 5 + d), (-4, -2))))
    return L1, L2


def lshape_instance(spacing: float = 0.5) -> DecouplingInstance:
    n = int(round(20 / spacing)) + 1
    lat = build_lattice([n, n], [spacing, spacing], [-10.0, -10.0])
    L1, L2 = lshape_regions()
    return DecouplingInstance(f"lshape-h{spacing:g}", STAIRCASE, lat, L1, L2)


def lshape_points(spacing: float = 0.5):
    """Physical grid points of both L shapes, for separability checks."""
    inst = lshape_instance(spacing)
    from .curvecoords import build_chart

    pts = build_chart(inst.polyline).to_physical(inst.chart_lattice.coords())
    return pts[inst.L1(pts)], pts[inst.L2(pts)]


def straight_line_separable(P1, P2) -> bool:
    """Whether some line w·p = c strictly separates two point sets (linear program)."""
    from scipy.optimize import linprog

    A = np.vstack([np.c_[P1, -np.ones(len(P1))], np.c_[-P2, np.ones(len(P2))]])
    res = linprog(np.zeros(3), A_ub=A, b_ub=-np.ones(len(A)), bounds=[(None, None)] * 3, method="highs")
    return res.status == 0


# ---------------------------------------------------------------------------
# Flat sanity instance and its transverse-mode oracle
# ---------------------------------------------------------------------------

def sanity_lattice() -> Lattice:
    """1+1D box [0, 16]² at spacing 0.125."""
    return build_lattice([129, 129], [0.125, 0.125], [0.0, 0.0])


def transverse_gap(n_x: int, h_x: float, h_t: float, m: float) -> float:
    """Decay rate per unit time of the lowest transverse mode of the flat Q1 operator.

    Separating variables with the lowest generalized eigenpair of the 1D
    spatial stiffness and mass matrices reduces the operator to a 1D
    three-term recurrence in time whose geometric solution decays at rate κ.
    """
    import scipy.linalg as sl

    main = np.full(n_x, 2.0)
    off = np.full(n_x - 1, -1.0)
    Kx = (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h_x
    Mx = (np.diag(4.0 * np.ones(n_x)) + np.diag(np.ones(n_x - 1), 1) + np.diag(np.ones(n_x - 1), -1)) * h_x / 6
    lam1 = sl.eigh(Kx, Mx, eigvals_only=True, subset_by_index=[0, 0])[0]
    c = lam1 + m * m
    # time stencil of (K_t ⊗ M_x + M_t ⊗ K_x + m² M_t ⊗ M_x) on the mode
    a = -1.0 / h_t + h_t * c / 6.0
    b = 2.0 / h_t + 2.0 * h_t * c / 3.0
    return float(np.arccosh(-b / (2.0 * a)) / h_t)


MARKOV_INSTANCES = ("slabs-cut", "thick-cut", "box-ring", "column-cut", "staircase-cut", "gap")


def markov_instance(name: str, lattice: Lattice):
    if name == "gap":
        return gap_cut(lattice)
    return markov_triples(lattice)[name]
