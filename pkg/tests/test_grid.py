import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adjoint_mather import InvalidArgument, InvalidDensity, TorusGrid
from oracles import central_symbol, laplacian_symbol


@pytest.mark.parametrize("n,k", [(16, 1), (64, 3), (128, 7)])
def test_central_gradient_matches_symbol(n, k):
    g = TorusGrid((n,))
    x = g.coords[0]
    d = g.gradient(np.sin(2 * np.pi * k * x))[0]
    np.testing.assert_allclose(d, central_symbol(k, n) * np.cos(2 * np.pi * k * x), atol=1e-10)


@pytest.mark.parametrize("n,k", [(16, 2), (96, 5)])
def test_laplacian_matches_symbol(n, k):
    g = TorusGrid((n, n))
    x, y = g.coords
    f = np.cos(2 * np.pi * k * x) * np.cos(2 * np.pi * y)
    expect = (laplacian_symbol(k, n) + laplacian_symbol(1, n)) * f
    np.testing.assert_allclose(g.laplacian(f), expect, atol=1e-8 * n**2)


def test_sparse_operators_match_array_stencils(rng):
    g = TorusGrid((12, 20))
    f = rng.standard_normal(g.shape)
    for a in range(2):
        np.testing.assert_allclose((g.diff_matrix(a) @ f.ravel()).reshape(g.shape), g.gradient(f)[a], atol=1e-10)
        fwd, bwd = g.gradient(f, mode="upwind-pair")
        np.testing.assert_allclose((g.diff_matrix(a, "forward") @ f.ravel()).reshape(g.shape), fwd[a], atol=1e-10)
        np.testing.assert_allclose((g.diff_matrix(a, "backward") @ f.ravel()).reshape(g.shape), bwd[a], atol=1e-10)
    np.testing.assert_allclose((g.laplacian_matrix() @ f.ravel()).reshape(g.shape), g.laplacian(f), atol=1e-8)


def test_hessian_of_diagonal_field_has_equal_entries(rng):
    n = 32
    g = TorusGrid((n, n))
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    s = ((i + j) % n) / n  # exact function of x1 + x2 on the nodes
    f = np.sin(2 * np.pi * s) + 0.3 * np.cos(4 * np.pi * s)
    H = g.hessian(f)
    assert np.array_equal(H[0, 0], H[0, 1]) and np.array_equal(H[1, 1], H[0, 1])


def test_quadrature_exact_for_trig_polynomials():
    g = TorusGrid((32,))
    x = g.coords[0]
    assert g.integrate(np.cos(2 * np.pi * 3 * x) ** 2) == pytest.approx(0.5, abs=1e-14)
    assert g.integrate(np.ones(32)) == pytest.approx(1.0, abs=1e-15)


def test_interpolation_is_exact_on_nodes_and_periodic(rng):
    g = TorusGrid((10, 14))
    f = rng.standard_normal(g.shape)
    pts = g.coords.reshape(2, -1)
    np.testing.assert_allclose(g.interpolate(f, pts), f.ravel(), atol=1e-14)
    np.testing.assert_allclose(g.interpolate(f, pts + 3.0), f.ravel(), atol=1e-12)


def test_rejections():
    with pytest.raises(InvalidArgument):
        TorusGrid((4,))
    with pytest.raises(InvalidArgument):
        TorusGrid((8, 8, 8))
    g = TorusGrid((8,))
    with pytest.raises(InvalidArgument):
        g.check_scalar(np.zeros(9))
    with pytest.raises(InvalidDensity):
        g.integrate(np.ones(8), -np.ones(8))
    with pytest.raises(InvalidArgument):
        g.gradient(np.zeros(8), mode="spectral")


@given(st.integers(8, 64), st.integers(0, 2**31 - 1))
def test_summation_by_parts(n, seed):
    """sum f Lap g = sum g Lap f and sum Lap f = 0 on the torus."""
    g = TorusGrid((n,))
    r = np.random.default_rng(seed)
    f, h = r.standard_normal((2, n))
    scale = n**2 * (np.abs(f).sum() + np.abs(h).sum())
    assert abs(g.integrate(f * g.laplacian(h)) - g.integrate(h * g.laplacian(f))) <= 1e-13 * scale
    assert abs(g.integrate(g.laplacian(f))) <= 1e-13 * scale
    assert abs(g.integrate(g.gradient(f)[0] * h) + g.integrate(f * g.gradient(h)[0])) <= 1e-13 * scale


@given(st.floats(-5, 5), st.integers(8, 40))
def test_constants_are_annihilated(c, n):
    g = TorusGrid((n, n))
    f = np.full(g.shape, c)
    assert np.abs(g.laplacian(f)).max() <= 1e-9 * n**2 * (1 + abs(c))
    assert np.abs(g.gradient(f)).max() <= 1e-9 * n * (1 + abs(c))
