"""Cutoff admissibility and the flattening snapshot's coefficient algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euler_fsbc.geometry import (
    CutoffSlopeError,
    GeometrySnapshot,
    build_cutoff,
    lift_surface,
    mean_curvature,
    normal_velocity_trace,
)
from euler_fsbc.grid import Grid


def test_cutoff_plateaus_and_band(small_grid):
    g = small_grid
    cut = build_cutoff(g, 0.2, 2.8, psi0_sup=0.1)
    on_top = g.z >= -0.2
    below = g.z <= -2.8
    np.testing.assert_array_equal(cut.chi[on_top], 1.0)
    np.testing.assert_array_equal(cut.chi[below], 0.0)
    np.testing.assert_array_equal(cut.chi_p[on_top | below], 0.0)
    assert cut.slope == pytest.approx(35.0 / (16.0 * 2.6), rel=1e-15)


def test_cutoff_defaults():
    g = Grid(12, 12, 9, 4.0)
    cut = build_cutoff(g, psi0_sup=0.0)
    assert cut.delta0 == 0.5
    assert cut.delta1 == g.b - 1.0


def test_cutoff_full_band_is_allowed(small_grid):
    # endpoints delta0=0 / delta1=b keep chi(0)=1 and chi(-b)=0 because the
    # smoothstep's first three derivatives vanish at both band ends
    cut = build_cutoff(small_grid, 0.0, small_grid.b, psi0_sup=0.2)
    assert cut.chi[0] == 1.0
    assert cut.chi[-1] == 0.0
    assert cut.chi_p[0] == 0.0
    assert cut.chi_p[-1] == 0.0


def test_cutoff_rejects_steep_band(small_grid):
    with pytest.raises(CutoffSlopeError):
        build_cutoff(small_grid, 1.0, 1.5, psi0_sup=1.0)


def test_cutoff_rejects_bad_intervals(small_grid):
    for d0, d1 in ((-0.1, 2.0), (0.5, 0.5), (2.0, 0.5), (0.5, small_grid.b + 1.0)):
        with pytest.raises(ValueError):
            build_cutoff(small_grid, d0, d1, psi0_sup=0.0)


def test_slope_bound_guarantees_positive_stretch(small_grid):
    g = small_grid
    sup = 0.3
    cut = build_cutoff(g, 0.0, g.b, psi0_sup=sup)
    psi = -sup * np.ones((g.nx, g.ny))  # worst admissible surface
    geom = GeometrySnapshot(g, cut, psi, np.zeros_like(psi))
    assert geom.min_d3phi > 0.0
    assert geom.min_d3phi == pytest.approx(1.0 - cut.slope * sup, rel=1e-6)


def test_snapshot_coefficient_relations(curved_geometry):
    g, geom = curved_geometry
    chi_p = geom.cutoff.chi_p[None, None, :]
    np.testing.assert_allclose(
        geom.d3phi, 1.0 + chi_p * geom.psi[:, :, None], atol=1e-15
    )
    np.testing.assert_allclose(geom.r1, geom.d1phi / geom.d3phi, atol=1e-14)
    np.testing.assert_allclose(
        geom.norm_N, np.sqrt(1.0 + geom.dpsi[0] ** 2 + geom.dpsi[1] ** 2), atol=1e-15
    )
    assert geom.depth_margin == pytest.approx(g.b - np.max(np.abs(geom.psi)))


def test_lift_hits_surface_and_bed(curved_geometry):
    g, geom = curved_geometry
    np.testing.assert_allclose(g.top(geom.phi), geom.psi, atol=1e-15)
    np.testing.assert_allclose(g.bottom(geom.phi), -g.b, atol=1e-15)


def test_phi_vderiv_closed_forms(curved_geometry):
    g, geom = curved_geometry
    # m=1, beta=0 is the stretch factor itself
    np.testing.assert_array_equal(geom.phi_vderiv(1), geom.d3phi)
    # beta=(1,0): chi * d1 psi at every order
    np.testing.assert_allclose(
        geom.phi_vderiv(0, (1, 0)),
        geom.cutoff.chi[None, None, :] * geom.dpsi[0][:, :, None],
        atol=1e-15,
    )
    with pytest.raises(ValueError):
        geom.phi_vderiv(4)


def test_closed_form_stretch_matches_spectral_derivative():
    # full-band cutoff: chi is one global degree-7 polynomial, so the
    # Chebyshev derivative of the nodal lift reproduces the closed form
    g = Grid(12, 12, 9, 3.0)
    cut = build_cutoff(g, 0.0, 3.0, psi0_sup=0.1)
    psi = 0.05 * np.cos(g.x1[:, None]) + 0.03 * np.sin(g.x2[None, :])
    geom = GeometrySnapshot(g, cut, psi, np.zeros_like(psi))
    np.testing.assert_allclose(g.deriv_vertical(geom.phi), geom.d3phi, atol=1e-12)
    np.testing.assert_allclose(
        g.deriv_vertical(geom.d3phi), geom.phi_vderiv(2), atol=1e-11
    )


def test_lift_surface_defaults_psi_t_to_zero(small_grid):
    g = small_grid
    cut = build_cutoff(g, 0.2, 2.8, psi0_sup=0.1)
    psi = 0.05 * np.cos(g.x1[:, None]) + 0.0 * g.x2[None, :]
    geom = lift_surface(psi, None, cut, g)
    assert np.all(geom.psi_t == 0.0)
    assert np.all(geom.dtphi == 0.0)


def test_normal_trace_reduces_to_vertical_component_when_flat(flat_geometry):
    g, geom = flat_geometry
    rng = np.random.default_rng(0)
    v = rng.normal(size=(3, g.nx, g.ny, g.nz))
    np.testing.assert_allclose(
        normal_velocity_trace(v, geom), g.top(v[2]), atol=1e-14
    )


def test_mean_curvature_flat_is_zero(small_grid):
    g = small_grid
    kappa = mean_curvature(np.zeros((g.nx, g.ny)), g)
    np.testing.assert_array_equal(kappa, 0.0)


def test_mean_curvature_linearizes_to_laplacian(small_grid):
    g = small_grid
    eps = 1e-3
    psi = eps * np.cos(g.x1[:, None]) + 0.0 * g.x2[None, :]
    kappa = mean_curvature(psi, g)
    # nonlinearity enters at third order in the slope
    np.testing.assert_allclose(kappa, psi, atol=5.0 * eps**3)


def test_mean_curvature_has_zero_mean(small_grid):
    g = small_grid
    psi = 0.3 * np.cos(g.x1[:, None]) + 0.2 * np.sin(2.0 * g.x2[None, :])
    kappa = mean_curvature(psi, g)
    assert abs(np.mean(kappa)) <= 1e-15


def test_snapshot_rejects_wrong_shape(small_grid):
    g = small_grid
    cut = build_cutoff(g, 0.0, g.b, psi0_sup=0.0)
    with pytest.raises(ValueError):
        GeometrySnapshot(g, cut, np.zeros((g.nx, g.ny + 1)), np.zeros((g.nx, g.ny + 1)))


@settings(deadline=None, max_examples=20)
@given(amp=st.floats(0.0, 0.3))
def test_admissible_amplitudes_keep_diffeomorphism(amp):
    g = Grid(8, 8, 9, 3.0)
    cut = build_cutoff(g, 0.0, 3.0, psi0_sup=0.3)
    psi = amp * np.cos(g.x1[:, None]) + 0.0 * g.x2[None, :]
    geom = GeometrySnapshot(g, cut, psi, np.zeros_like(psi))
    assert geom.min_d3phi >= 1.0 - cut.slope * 0.3 - 1e-12
    assert geom.min_d3phi > 0.0
