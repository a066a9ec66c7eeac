import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transferlab.catalog import (
    STAIRCASE,
    lshape_instance,
    lshape_points,
    nspace_for,
    slabs_instance,
    straight_line_separable,
)
from transferlab.curvecoords import (
    best_rotation,
    build_chart,
    chart_g11_sup,
    chart_space,
    decoupling_bound,
    decoupling_experiment,
    map_regions,
    read_curve_file,
    rotate,
    rotation_scan,
)
from transferlab.errors import GeometryError, InputError, UsageError
from transferlab.lattice import MetricSpec, build_lattice
from transferlab.markov import cross_norm, half_space, rectangle, region_from_mask


class Rotated:
    """Predicate of the configuration rotated by ``-phi``."""

    def __init__(self, pred, phi):
        self.pred, self.phi = pred, phi

    def __call__(self, pts):
        return self.pred(rotate(pts, self.phi))


def test_rotate_inverse():
    p = np.array([[1.0, 2.0], [-3.0, 0.5]])
    assert np.allclose(rotate(rotate(p, 0.7), -0.7), p)
    assert np.allclose(rotate([[1.0, 0.0]], np.pi / 2), [[0.0, 1.0]])


def test_staircase_geometry():
    ch = build_chart(STAIRCASE)
    assert np.allclose(ch.slopes, [0.0, 1.0, 0.0])
    assert ch.min_cos == pytest.approx(1 / np.sqrt(2))
    assert chart_g11_sup(ch) == pytest.approx(2.0)
    assert np.allclose(ch.gamma1(np.array([-20.0, 0.0, 1.0, 20.0])), [-2.0, 0.0, 1.0, 2.0])
    # only the flat end segment meets xi in [-9, -4]
    assert ch.segments_within(-9, -4).tolist() == [0]
    assert ch.min_cos_within(-9, -4) == 1.0
    assert ch.min_cos_within(-9, 9) == pytest.approx(1 / np.sqrt(2))
    g = ch.segment_metrics()
    assert np.allclose(np.linalg.inv(g)[:, 0, 0], 1 / ch.cos**2)


def test_decreasing_polyline_is_reversed():
    ch = build_chart(STAIRCASE[::-1])
    assert np.allclose(ch.vertices, build_chart(STAIRCASE).vertices)


def test_non_monotone_names_segment():
    with pytest.raises(GeometryError, match="segment 1"):
        build_chart([[0, 0], [1, 1], [2, 0.5]])
    with pytest.raises(GeometryError):
        build_chart([[0, 0]])
    with pytest.raises(GeometryError):
        build_chart([[0, 0], [np.nan, 1]])
    with pytest.raises(GeometryError, match="segment 0 is vertical"):
        build_chart([[0, -8], [0, 8]], np.pi / 2)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-8, 8), st.floats(-8, 8)), min_size=1, max_size=5),
    st.floats(-0.5, 0.5),
)
def test_chart_roundtrip(points, phi):
    ch = build_chart(STAIRCASE, phi)
    p = np.array(points)
    assert np.allclose(ch.to_physical(ch.to_chart(p)), p, atol=1e-10)


def test_curve_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# t x\n-2 -10\n-2, -2  # corner\n\n2 2\n")
    assert read_curve_file(p).tolist() == [[-2, -10], [-2, -2], [2, 2]]
    p.write_text("1 2 3\n")
    with pytest.raises(InputError):
        read_curve_file(p)
    p.write_text("1 b\n")
    with pytest.raises(InputError):
        read_curve_file(p)
    with pytest.raises(InputError):
        read_curve_file(tmp_path / "missing.txt")


def test_bound_guards():
    assert decoupling_bound(1.0, -1.0, 1.0, 0.5) == pytest.approx(np.exp(-1.0))
    for args in [(0.0, 0, 1, 1), (1.0, 1, 1, 1), (1.0, 0, 1, 0), (1.0, 0, 1, 1.5)]:
        with pytest.raises(UsageError):
            decoupling_bound(*args)


def test_regions_on_wrong_side():
    lat = build_lattice([9, 9], [1, 1], [-4, -4])
    ch = build_chart([[0, -4], [0, 4]])
    R1 = region_from_mask(lat, half_space(0, ">=", 1))
    R2 = region_from_mask(lat, half_space(0, "<=", -1))
    with pytest.raises(GeometryError):
        map_regions(R1, R2, ch)


def test_horizontal_chart_is_identity():
    inst = slabs_instance(2.0)
    setup = chart_space(build_chart(inst.polyline), inst.chart_lattice, 1.0)
    assert np.allclose(setup.points, inst.chart_lattice.coords())
    direct = nspace_for(inst.chart_lattice, MetricSpec("flat"), 1.0)
    lat = inst.chart_lattice
    a = cross_norm(region_from_mask(lat, inst.L1), region_from_mask(lat, inst.L2), direct)
    rep = decoupling_experiment(inst.L1, inst.L2, setup)
    assert rep.direct == pytest.approx(a, rel=1e-10)


@pytest.fixture(scope="module")
def slabs_reports():
    out = {}
    for gap in (1.0, 2.0, 3.0):
        inst = slabs_instance(gap)
        setup = chart_space(build_chart(inst.polyline), inst.chart_lattice, 1.0)
        out[gap] = decoupling_experiment(inst.L1, inst.L2, setup)
    return out


def test_slabs_bound(slabs_reports):
    for rep in slabs_reports.values():
        assert rep.direct <= 1.05 * rep.bound
        assert rep.chain_residual <= 1e-8
        assert rep.min_cos == 1.0


def test_decoupling_monotone_in_gap(slabs_reports):
    reps = [slabs_reports[g] for g in sorted(slabs_reports)]
    assert [r.beta - r.alpha for r in reps] == [1.0, 2.0, 3.0]
    assert all(a.direct > b.direct for a, b in zip(reps, reps[1:]))
    assert all(a.bound > b.bound for a, b in zip(reps, reps[1:]))


def test_lshape():
    P1, P2 = lshape_points(0.5)
    assert not straight_line_separable(P1, P2)
    assert straight_line_separable(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]))
    inst = lshape_instance(0.5)
    setup = chart_space(build_chart(inst.polyline), inst.chart_lattice, 1.0)
    rep = decoupling_experiment(inst.L1, inst.L2, setup)
    assert rep.min_cos == pytest.approx(1 / np.sqrt(2))
    assert rep.direct <= 1.05 * rep.bound
    assert rep.chain_residual <= 1e-8


def test_rotation_covariance():
    # rotating the whole configuration by -phi and the chart by +phi reproduces the unrotated run
    inst = slabs_instance(2.0)
    lat = inst.chart_lattice
    base = decoupling_experiment(inst.L1, inst.L2, chart_space(build_chart(inst.polyline), lat, 1.0))
    phi = 0.3
    poly = rotate(np.array(inst.polyline), -phi)
    rot = decoupling_experiment(
        Rotated(inst.L1, phi), Rotated(inst.L2, phi), chart_space(build_chart(poly, phi), lat, 1.0)
    )
    assert rot.rotation == phi
    assert rot.bound == pytest.approx(base.bound, rel=1e-10)
    assert rot.direct == pytest.approx(base.direct, rel=1e-10)


def test_rotation_scan_picks_smallest_bound():
    inst = slabs_instance(2.0, spacing=1.0)
    reps = rotation_scan(inst.polyline, inst.L1, inst.L2, inst.chart_lattice, 1.0, [-0.2, 0.0, 0.2])
    best = best_rotation(reps)
    assert best.bound == min(r.bound for r in reps)
    with pytest.raises(GeometryError):
        rotation_scan(inst.polyline, inst.L1, inst.L2, inst.chart_lattice, 1.0, [np.pi / 2])


def test_interior_window_enforced():
    lat = build_lattice([17, 17], [0.5, 0.5], [-4, -4])
    setup = chart_space(build_chart([[0, -4], [0, 4]]), lat, 1.0)
    with pytest.raises(GeometryError, match="interior window"):
        decoupling_experiment(half_space(0, "<=", -3.75), half_space(0, ">=", 1.0), setup)
    with pytest.raises(UsageError):
        decoupling_experiment(half_space(0, "<=", -1), half_space(0, ">=", 1), setup, m=2.0)


@pytest.mark.slow
def test_chart_consistency_fine_lattice():
    """A slope-1 chart of flat space reproduces the flat cross norm within 3% at h = 0.125."""
    h = 0.125
    L1, L2 = rectangle((-3, -1.5), (-1, 1)), rectangle((1.5, 3), (-1, 1))
    orig = build_lattice([161, 65], [h, h], [-10, -4])
    flat = nspace_for(orig, MetricSpec("flat"), 1.0)
    ref = cross_norm(region_from_mask(orig, L1), region_from_mask(orig, L2), flat)
    setup = chart_space(build_chart([[-10, -10], [10, 10]]), build_lattice([97, 65], [h, h], [-6, -4]), 1.0)
    R1 = region_from_mask(setup.lattice, L1, points=setup.points)
    R2 = region_from_mask(setup.lattice, L2, points=setup.points)
    assert R1.size == region_from_mask(orig, L1).size
    val = cross_norm(R1, R2, setup.space)
    assert abs(val - ref) / ref <= 0.03
