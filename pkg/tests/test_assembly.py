import numpy as np
import pytest
import scipy.sparse.linalg as spla

from conftest import dense_stiffness_1d, random_vector
from transferlab import _accel, assembly
from transferlab.assembly import (
    GreenKernel,
    agmon_distance,
    agmon_distances,
    assemble_helmholtz,
    geodesic_growth,
    green_kernel,
    kernel_decay_rate,
    solve,
)
from transferlab.errors import ConfigurationError, UsageError
from transferlab.lattice import MetricSpec, build_lattice, sample_metric


def _op(shape=(7, 6), spacing=(0.5, 0.4), spec=MetricSpec("flat"), m=1.0):
    lat = build_lattice(shape, spacing)
    return assemble_helmholtz(lat, sample_metric(spec, lat), m)


def test_flat_stiffness_matches_tensor_product():
    nt, nx, ht, hx, m = 7, 6, 0.5, 0.4, 1.3
    op = _op((nt, nx), (ht, hx), m=m)
    Kt, Mt = dense_stiffness_1d(nt, ht)
    Kx, Mx = dense_stiffness_1d(nx, hx)
    oracle = np.kron(Kt, Mx) + np.kron(Mt, Kx) + m * m * np.kron(Mt, Mx)
    assert np.allclose(op.stiffness.toarray(), oracle, rtol=0, atol=1e-13)


def test_flat_stiffness_3d():
    n, h = (4, 3, 5), (0.5, 0.7, 0.3)
    op = _op(n, h, m=0.6)
    K = [dense_stiffness_1d(k, s) for k, s in zip(n, h)]

    def kron3(a, b, c):
        return np.kron(np.kron(a, b), c)

    oracle = (
        kron3(K[0][0], K[1][1], K[2][1]) + kron3(K[0][1], K[1][0], K[2][1]) + kron3(K[0][1], K[1][1], K[2][0])
    ) + 0.36 * kron3(K[0][1], K[1][1], K[2][1])
    assert np.allclose(op.stiffness.toarray(), oracle, atol=1e-13)


def test_constant_metric_is_linear_change_of_variables():
    # a constant diagonal metric diag(a, b) is flat with rescaled spacings
    a, b = 0.25, 1.0
    op = _op(spec=MetricSpec("diagonal-stationary", {"diag": [a, b]}))
    Kt, Mt = dense_stiffness_1d(7, 0.5)
    Kx, Mx = dense_stiffness_1d(6, 0.4)
    sq = np.sqrt(a * b)
    oracle = sq * (np.kron(Kt, Mx) / a + np.kron(Mt, Kx) / b + np.kron(Mt, Mx))
    assert np.allclose(op.stiffness.toarray(), oracle, atol=1e-13)


@pytest.mark.parametrize("spec", [MetricSpec("curve-induced", {"slope": 1.5}), MetricSpec("conformal", {"phi": 0.2})])
def test_symmetric_positive(spec):
    op = _op(spec=spec)
    assert op.weighted_symmetry_residual() == 0.0
    assert np.linalg.eigvalsh(op.stiffness.toarray())[0] > 0
    # diag(mu) A = K
    assert np.allclose((op.weights[:, None] * op.matrix.toarray()), op.stiffness.toarray())


def test_kernel_is_inverse_and_positive():
    op = _op()
    E = green_kernel(op).matrix
    assert np.allclose(E @ op.stiffness.toarray(), np.eye(op.size), atol=1e-12)
    assert np.all(E > 0)
    assert np.allclose(E, E.T, atol=1e-15)


def test_green_convention():
    # (E f)_i = sum_j E(i,j) f_j mu_j solves A u = f
    op = _op()
    k = green_kernel(op)
    f = random_vector(op.size)
    u = k.matrix @ (f * op.weights)
    assert np.allclose(op.matrix @ u, f)


def test_on_demand_columns_match_dense():
    op = _op()
    dense = GreenKernel(op)
    lazy = GreenKernel(op, dense=False)
    js = [0, 5, 17]
    assert np.allclose(lazy.columns(js), dense.columns(js), atol=1e-14)
    assert np.allclose(lazy.block([1, 2], js), dense.block([1, 2], js))
    assert lazy.entry(5, 3) == pytest.approx(dense.entry(5, 3), rel=1e-12)
    v = random_vector(op.size)
    assert np.allclose(lazy.apply(v), dense.apply(v))
    with pytest.raises(UsageError):
        lazy.matrix


def test_cg_path(monkeypatch):
    op = _op((20, 15), (0.5, 0.5), MetricSpec("curve-induced", {"slope": 0.8}))
    rhs = random_vector(op.size)
    direct = solve(op, rhs)
    monkeypatch.setattr(assembly, "DENSE_LIMIT", 10)
    it = solve(op, rhs)
    assert np.linalg.norm(it - direct) / np.linalg.norm(direct) < 1e-10


@pytest.mark.parametrize("backend", ["0", "1"])
def test_backends_agree(monkeypatch, backend):
    monkeypatch.setenv("TRANSFERLAB_NUMBA", backend)
    lat = build_lattice([6, 5, 4], [0.5, 0.4, 0.3])
    m = sample_metric(MetricSpec("conformal", {"phi": 0.1}), lat)
    K = assemble_helmholtz(lat, m, 1.0).stiffness
    monkeypatch.setenv("TRANSFERLAB_NUMBA", "0")
    ref = assemble_helmholtz(lat, m, 1.0).stiffness
    assert spla.norm(K - ref) <= 1e-14 * spla.norm(ref)
    b = random_vector(lat.count)
    monkeypatch.setenv("TRANSFERLAB_NUMBA", backend)
    x, its, res = _accel.pcg(K, b, np.ones(lat.count), 1e-12, 1000)
    assert res <= 1e-12
    assert np.allclose(K @ x, b, atol=1e-9)


def test_solve_shape_check():
    op = _op()
    with pytest.raises(UsageError):
        solve(op, np.ones(op.size + 1))


def test_complex_solve():
    op = _op()
    r = random_vector(op.size, 1) + 1j * random_vector(op.size, 2)
    u = solve(op, r)
    assert np.allclose(op.matrix @ u, r)


def test_mass_must_be_positive():
    lat = build_lattice([4, 4], [1, 1])
    with pytest.raises(ConfigurationError):
        assemble_helmholtz(lat, sample_metric(MetricSpec("flat"), lat), 0.0)


def test_adjacency_is_cell_neighbourhood():
    op = _op((5, 5), (1, 1))
    G = assembly.adjacency_graph(op)
    lat = op.lattice
    c = lat.index((2, 2))
    nbrs = sorted(G[c].indices)
    expect = sorted(lat.index((2 + a, 2 + b)) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0))
    assert nbrs == expect


def test_kernel_decay_rate_flat():
    lat = build_lattice([41, 41], [0.5, 0.5])
    op = assemble_helmholtz(lat, sample_metric(MetricSpec("flat"), lat), 1.0)
    k = green_kernel(op)
    rate = kernel_decay_rate(k, lat.index((10, 20)), range(4, 12))
    # coarse lattice plus finite box: within 15% of m
    assert 0.9 < rate < 1.15


def test_agmon_flat_time_axis():
    lat = build_lattice([9, 9], [0.5, 0.5])
    md = sample_metric(MetricSpec("flat"), lat)
    d = agmon_distances(md, 2.0, lat.index((0, 4)))
    assert d[lat.index((4, 4))] == pytest.approx(2.0 * 2.0)
    # diagonal edges carry the riemannian diagonal length
    assert d[lat.index((1, 5))] == pytest.approx(2.0 * 0.5 * np.sqrt(2))
    assert agmon_distance(md, 2.0, 3, 3) == 0.0
    assert agmon_distance(md, 4.0, lat.index((0, 4)), lat.index((4, 4)), "sqrt") == pytest.approx(4.0)


def test_agmon_growth_slope():
    lat = build_lattice([9, 9], [0.5, 0.5])
    md = sample_metric(MetricSpec("diagonal-stationary", {"diag": [4.0, 1.0]}), lat)
    g = geodesic_growth(md, 1.0, lat.index((0, 4)))
    assert g["slope"] == pytest.approx(2.0)
    assert g["min_ratio"] == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        geodesic_growth(md, 1.0, 0, "cubic")
