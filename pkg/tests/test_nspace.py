import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_vector
from transferlab.errors import UsageError
from transferlab.markov import projector, slice_region
from transferlab.nspace import (
    SliceVector,
    embed,
    l2_nu_norm,
    n_inner,
    n_norm,
    restrict,
    slice_sqrt_apply,
    slice_space,
    sqrt_identity_residuals,
)


def test_gram_is_mu_E_mu(tiny):
    mu = tiny.weights
    G = tiny.gram(np.arange(tiny.size), np.arange(tiny.size))
    assert np.allclose(G, mu[:, None] * tiny.kernel.matrix * mu[None, :])
    assert np.linalg.eigvalsh(G)[0] > 0


def test_n_inner_dense(tiny):
    f, h = random_vector(tiny.size, 1), random_vector(tiny.size, 2)
    G = tiny.gram(np.arange(tiny.size), np.arange(tiny.size))
    assert n_inner(f, h, tiny) == pytest.approx(f @ G @ h, rel=1e-12)
    assert n_norm(f, tiny) ** 2 == pytest.approx(f @ G @ f, rel=1e-12)
    with pytest.raises(UsageError):
        n_inner(f[:-1], h, tiny)


def test_complex_inner_is_sesquilinear(tiny):
    f = random_vector(tiny.size, 1) + 1j * random_vector(tiny.size, 2)
    h = random_vector(tiny.size, 3)
    assert n_inner(1j * f, h, tiny) == pytest.approx(-1j * n_inner(f, h, tiny))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_cauchy_schwarz(flat17, a, b):
    f, h = random_vector(flat17.size, a), random_vector(flat17.size, b)
    assert abs(n_inner(f, h, flat17)) <= n_norm(f, flat17) * n_norm(h, flat17) * (1 + 1e-12)


def test_slice_gram(tiny):
    sl_ = slice_space(2, tiny)
    nu = tiny.weights[sl_.sites] / tiny.h0
    assert np.allclose(sl_.gram, nu[:, None] * tiny.kernel.matrix[np.ix_(sl_.sites, sl_.sites)] * nu[None, :])
    assert slice_space(2, tiny) is sl_
    with pytest.raises(UsageError):
        slice_space(tiny.nt, tiny)


def test_embed_restrict(space17):
    sigma = 8
    sl_ = slice_space(sigma, space17)
    psi = SliceVector(sl_, random_vector(sl_.size))
    # j* j = 1
    assert np.allclose(restrict(embed(psi), sigma, space17).values, psi.values, atol=1e-12)
    # j is an isometry
    assert n_norm(embed(psi), space17) == pytest.approx(psi.norm(), rel=1e-12)
    # j j* = e_sigma
    f = random_vector(space17.size, 5)
    P = projector(slice_region(space17.lattice, sigma), space17)
    assert np.allclose(embed(restrict(f, sigma, space17)), P(f), atol=1e-10)


def test_sqrt_identities(space17):
    for sigma in (4, 8, 12):
        r = sqrt_identity_residuals(slice_space(sigma, space17))
        assert max(r.values()) < 1e-12


def test_sqrt_against_scipy(tiny):
    sl_ = slice_space(3, tiny)
    Ehat = sl_.kernel * sl_.nu[None, :]
    root = sl.sqrtm(Ehat).real
    assert np.allclose(sl_.sqrt_matrix, root, atol=1e-12)
    psi = random_vector(sl_.size)
    fwd = slice_sqrt_apply(sl_, psi)
    # ||Ê^{1/2} psi||_{L2(nu)} = ||psi||_N
    assert l2_nu_norm(sl_, fwd.values) == pytest.approx(sl_.norm(psi), rel=1e-12)
    back = slice_sqrt_apply(sl_, fwd, "adjoint-inverse")
    assert np.allclose(back.values, psi)
    with pytest.raises(UsageError):
        slice_sqrt_apply(sl_, psi, "sideways")


def test_slice_vector_size(tiny):
    with pytest.raises(UsageError):
        SliceVector(slice_space(0, tiny), np.ones(3))
