"""Grid primitives: spectral derivatives, quadrature, norms, filtering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euler_fsbc.grid import Grid, chebyshev_lobatto, clenshaw_curtis_weights


def test_vertical_axis_orientation(small_grid):
    g = small_grid
    assert g.z[0] == 0.0
    assert g.z[-1] == pytest.approx(-g.b, abs=1e-14)
    assert np.all(np.diff(g.z) < 0)


def test_grid_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        Grid(3, 12, 9, 1.0)
    with pytest.raises(ValueError):
        Grid(12, 12, 4, 1.0)
    with pytest.raises(ValueError):
        Grid(12, 12, 9, 0.0)


def test_chebyshev_matrix_differentiates_polynomials():
    x, D = chebyshev_lobatto(9)
    np.testing.assert_allclose(D @ x**3, 3.0 * x**2, atol=1e-12)
    np.testing.assert_allclose(D @ np.ones_like(x), 0.0, atol=1e-13)


def test_clenshaw_curtis_integrates_even_powers():
    w = clenshaw_curtis_weights(9)
    x, _ = chebyshev_lobatto(9)
    assert w @ x**4 == pytest.approx(2.0 / 5.0, rel=1e-13)
    assert w @ np.ones_like(x) == pytest.approx(2.0, rel=1e-14)


def test_tangential_derivative_exact_on_modes(small_grid):
    g = small_grid
    X1 = g.x1[:, None]
    X2 = g.x2[None, :]
    f = np.cos(3.0 * X1) * np.sin(2.0 * X2)
    d1 = g.deriv_tangential(f, 1)
    np.testing.assert_allclose(d1, -3.0 * np.sin(3.0 * X1) * np.sin(2.0 * X2), atol=1e-12)
    d2 = g.deriv_tangential(f, 2)
    np.testing.assert_allclose(d2, 2.0 * np.cos(3.0 * X1) * np.cos(2.0 * X2), atol=1e-12)


def test_repeated_first_derivative_matches_second_order(small_grid):
    g = small_grid
    rng = np.random.default_rng(11)
    f = g.dealias(rng.normal(size=(g.nx, g.ny)))
    twice = g.deriv_tangential(g.deriv_tangential(f, 1), 1)
    once = g.deriv_tangential(f, 1, order=2)
    np.testing.assert_allclose(twice, once, atol=1e-11)


def test_vertical_derivative_exact_on_cubic(small_grid):
    g = small_grid
    f = np.broadcast_to(g.z**3, (g.nx, g.ny, g.nz))
    expect = np.broadcast_to(3.0 * g.z**2, f.shape)
    np.testing.assert_allclose(g.deriv_vertical(f), expect, atol=1e-10)


def test_volume_quadrature_on_polynomial(small_grid):
    g = small_grid
    f = np.broadcast_to(g.z**2, (g.nx, g.ny, g.nz)).copy()
    exact = (2.0 * np.pi) ** 2 * g.b**3 / 3.0
    assert g.integrate_volume(f) == pytest.approx(exact, rel=1e-13)


def test_surface_quadrature_kills_oscillation(small_grid):
    g = small_grid
    f = np.cos(2.0 * g.x1[:, None]) + 0.0 * g.x2[None, :]
    assert g.integrate_surface(f) == pytest.approx(0.0, abs=1e-12)
    assert g.integrate_surface(np.ones((g.nx, g.ny))) == pytest.approx(
        g.surface_area, rel=1e-14
    )


def test_dealias_is_a_projection(small_grid):
    g = small_grid
    rng = np.random.default_rng(5)
    f = rng.normal(size=(g.nx, g.ny))
    once = g.dealias(f)
    np.testing.assert_allclose(g.dealias(once), once, atol=1e-14)


def test_pmul_exact_for_resolved_product(small_grid):
    g = small_grid
    X1 = g.x1[:, None]
    X2 = g.x2[None, :]
    a = np.cos(2.0 * X1) + 0.0 * X2
    b = np.sin(X2) + 0.0 * X1
    # product modes stay inside |k| <= n//3, so the filter removes nothing
    np.testing.assert_allclose(g.pmul(a, b), a * b, atol=1e-13)


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10_000))
def test_pmul_commutes(seed):
    g = Grid(12, 12, 9, 2.0)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(12, 12))
    b = rng.normal(size=(12, 12))
    np.testing.assert_array_equal(g.pmul(a, b), g.pmul(b, a))


def test_boundary_sobolev_norm_of_constant(small_grid):
    g = small_grid
    ones = np.ones((g.nx, g.ny))
    for s in (0.0, 1.5, 4.0):
        assert g.boundary_sobolev_norm(ones, s) == pytest.approx(2.0 * np.pi, rel=1e-14)


def test_boundary_sobolev_norm_single_mode(small_grid):
    g = small_grid
    f = np.cos(g.x1[:, None]) + 0.0 * g.x2[None, :]
    for s in (0.0, 2.0, 4.0):
        expect = 2.0 * np.pi * np.sqrt(2.0**s * 0.5)
        assert g.boundary_sobolev_norm(f, s) == pytest.approx(expect, rel=1e-13)


def test_interior_sobolev_zero_order_is_l2(small_grid):
    g = small_grid
    rng = np.random.default_rng(2)
    f = rng.normal(size=(g.nx, g.ny, g.nz))
    assert g.interior_sobolev_norm(f, 0) == pytest.approx(g.l2_volume(f), rel=1e-13)


def test_holder_norm_orders_for_single_mode(small_grid):
    g = small_grid
    f = np.cos(g.x1[:, None]) + 0.0 * g.x2[None, :]
    norms = g.holder_and_sup_norms(f, 3)
    # each tangential derivative of cos x1 has grid sup exactly 1 (nx % 4 == 0)
    assert norms.by_order == pytest.approx((1.0, 1.0, 1.0, 1.0), abs=1e-13)
    assert norms.total == pytest.approx(4.0, abs=1e-12)
    assert norms.sup == pytest.approx(1.0, abs=1e-14)


@settings(deadline=None, max_examples=20)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.25, 4.0))
def test_norms_scale_linearly(seed, scale):
    g = Grid(12, 12, 9, 2.0)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(12, 12, 9))
    assert g.l2_volume(scale * f) == pytest.approx(scale * g.l2_volume(f), rel=1e-12)
    assert g.sup_volume(scale * f) == pytest.approx(scale * g.sup_volume(f), rel=1e-12)
