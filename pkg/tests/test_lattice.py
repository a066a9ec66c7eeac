import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transferlab.errors import ConfigurationError, InputError, MetricError
from transferlab.lattice import (
    MetricSpec,
    build_lattice,
    check_stable_positivity,
    curve_slopes,
    induced_metric,
    make_metric_field,
    measure_weights,
    sample_metric,
    write_tabulated,
)


def test_index_roundtrip_and_slices():
    lat = build_lattice([4, 3, 5], [0.5, 1.0, 0.25])
    for i in (0, 7, lat.count - 1):
        assert lat.index(lat.multi_index(i)) == i
    s = lat.slice_sites(2)
    assert np.array_equal(s, np.arange(30, 45))
    assert np.all(lat.time_of(s) == 2)
    assert lat.cell_volume == pytest.approx(0.125)


def test_coords_are_c_ordered():
    lat = build_lattice([3, 4], [0.5, 2.0], [1.0, -1.0])
    c = lat.coords()
    assert c.shape == (12, 2)
    assert np.allclose(c[lat.index((2, 1))], [2.0, 1.0])


@pytest.mark.parametrize(
    "shape,spacing",
    [([5], [1.0]), ([5, 5, 5, 5], [1.0] * 4), ([5, 2], [1.0, 1.0]), ([5, 5], [1.0, 0.0]), ([5, 5], [1.0])],
)
def test_bad_lattice(shape, spacing):
    with pytest.raises(ConfigurationError):
        build_lattice(shape, spacing)


def test_unknown_family():
    with pytest.raises(ConfigurationError):
        MetricSpec("hyperbolic")


def test_induced_metric_structure():
    g = induced_metric(np.array([0.0, 1.0, -2.5]))
    assert np.allclose(np.linalg.det(g), 1.0)
    inv = np.linalg.inv(g)
    # g'^{σσ} = 1 + s², g'^{ξξ} = 1
    assert np.allclose(inv[:, 0, 0], [1.0, 2.0, 7.25])
    assert np.allclose(inv[:, 1, 1], 1.0)


@given(st.floats(-50, 50, allow_nan=False))
def test_induced_metric_positive(s):
    lam = np.linalg.eigvalsh(induced_metric(s))
    assert lam[0] > 0
    assert lam[0] * lam[1] == pytest.approx(1.0, rel=1e-9)


def test_curve_slopes_vertex_average_and_extension():
    v = [[0, -2], [0, 0], [2, 1]]
    s = curve_slopes(v, np.array([-5.0, -1.0, 0.0, 0.5, 3.0]))
    assert np.allclose(s, [0.0, 0.0, 1.0, 2.0, 2.0])


def test_sample_families():
    lat = build_lattice([4, 5], [0.5, 0.5], [0, -1])
    flat = sample_metric(MetricSpec("flat"), lat)
    assert np.allclose(flat.sqrt_det, 1.0)
    assert flat.is_time_independent()
    conf = sample_metric(MetricSpec("conformal", {"phi": 0.5}), lat)
    assert np.allclose(conf.sqrt_det, np.exp(1.0))
    tdep = sample_metric(MetricSpec("conformal", {"phi": np.linspace(0, 1, 20).reshape(4, 5)}), lat)
    assert not tdep.is_time_independent()
    diag = sample_metric(MetricSpec("diagonal-stationary", {"diag": [0.25, 1.0]}), lat)
    assert np.allclose(diag.inverse[:, 0, 0], 4.0)
    assert np.allclose(measure_weights(diag), 0.5 * 0.25)


def test_diagonal_stationary_rejects_time_dependence():
    lat = build_lattice([4, 5], [0.5, 0.5])
    with pytest.raises(ConfigurationError):
        sample_metric(MetricSpec("diagonal-stationary", {"diag": [np.ones((4, 5)), 1.0]}), lat)


def test_curve_induced_needs_2d():
    lat = build_lattice([4, 4, 4], [1, 1, 1])
    with pytest.raises(ConfigurationError):
        sample_metric(MetricSpec("curve-induced", {"slope": 1.0}), lat)


def test_non_positive_metric_names_site():
    lat = build_lattice([3, 3], [1, 1])
    g = np.broadcast_to(np.eye(2), (9, 2, 2)).copy()
    g[4] = [[1, 2], [2, 1]]
    with pytest.raises(MetricError) as exc:
        make_metric_field(lat, g)
    assert exc.value.site == 4
    assert "lattice.sample_metric" in str(exc.value)


def test_non_finite_and_asymmetric_metric():
    lat = build_lattice([3, 3], [1, 1])
    g = np.broadcast_to(np.eye(2), (9, 2, 2)).copy()
    g[2, 0, 0] = np.nan
    with pytest.raises(MetricError):
        make_metric_field(lat, g)
    g[2, 0, 0] = 1.0
    g[3, 0, 1] = 0.1
    with pytest.raises(MetricError):
        make_metric_field(lat, g)


def test_tabulated_roundtrip(tmp_path):
    lat = build_lattice([4, 5], [0.5, 0.5])
    m = sample_metric(MetricSpec("curve-induced", {"slope": 0.7}), lat)
    p = tmp_path / "g.csv"
    write_tabulated(p, m)
    back = sample_metric(MetricSpec("tabulated", {"path": str(p)}), lat)
    assert np.array_equal(back.g, m.g)


@pytest.mark.parametrize(
    "text",
    ["2,4,4\n", "x\n", "2,4,5\n" + "1,0,1\n" * 19, "2,4,5\n" + "1,0\n" * 20, "2,4,5\n" + "1,a,1\n" * 20],
)
def test_tabulated_malformed(tmp_path, text):
    lat = build_lattice([4, 5], [0.5, 0.5])
    p = tmp_path / "g.csv"
    p.write_text(text)
    with pytest.raises(InputError):
        sample_metric(MetricSpec("tabulated", {"path": str(p)}), lat)


def test_tabulated_missing(tmp_path):
    lat = build_lattice([4, 5], [0.5, 0.5])
    with pytest.raises(InputError):
        sample_metric(MetricSpec("tabulated", {"path": str(tmp_path / "nope.csv")}), lat)


def test_stable_positivity():
    lat = build_lattice([3, 3], [1, 1])
    m = sample_metric(MetricSpec("diagonal-stationary", {"diag": [0.25, 1.0]}), lat)
    assert check_stable_positivity(m, 0.1)["pass"]
    bad = check_stable_positivity(m, 0.2)
    assert not bad["pass"] and bad["site"] == 0
    with pytest.raises(ConfigurationError):
        check_stable_positivity(m, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-12, 12), min_size=3, max_size=6, unique=True))
def test_curve_slopes_match_secants(ks):
    # vertices on a quarter grid, well outside the on-vertex tolerance
    xs = sorted(0.25 * k for k in ks)
    v = np.column_stack([np.cos(xs), xs])
    mids = 0.5 * (np.array(xs[1:]) + np.array(xs[:-1]))
    expect = np.diff(v[:, 0]) / np.diff(v[:, 1])
    assert np.allclose(curve_slopes(v, mids), expect)
