"""Surface lift and flattening geometry.

The moving domain {x3 <= psi(t, x')} is pulled back to the fixed slab by

    phi(t, x', x3) = x3 + chi(x3) * psi(t, x'),

where chi is a fixed C^3 vertical cutoff equal to 1 near the top boundary
and 0 near the bottom.  A GeometrySnapshot freezes everything the flattened
differential operators need at one instant: the Jacobian entry d3phi, the
slope ratios r_a = (da phi)/(d3 phi), the inverse stretch s = 1/(d3 phi),
and closed-form vertical derivatives of all of these.

Vertical derivatives of chi are stored analytically.  chi is only C^3 across
the transition band, so differentiating it with the collocation matrix would
cost five digits at production resolutions; every operator in this package
that needs d/dx3 of a geometry coefficient reads the closed form instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid


class CutoffSlopeError(ValueError):
    """Transition band too narrow for the requested surface amplitude."""


def _smoothstep7(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """C^3 polynomial step: value and first three derivatives on [0, 1]."""
    s = 35 * t**4 - 84 * t**5 + 70 * t**6 - 20 * t**7
    s1 = 140 * t**3 - 420 * t**4 + 420 * t**5 - 140 * t**6
    s2 = 420 * t**2 - 1680 * t**3 + 2100 * t**4 - 840 * t**5
    s3 = 840 * t - 5040 * t**2 + 8400 * t**3 - 4200 * t**4
    return s, s1, s2, s3


@dataclass(frozen=True)
class CutoffProfile:
    """Nodal values of the vertical cutoff and its closed-form derivatives."""

    delta0: float
    delta1: float
    slope: float
    chi: np.ndarray
    chi_p: np.ndarray
    chi_pp: np.ndarray
    chi_ppp: np.ndarray


def build_cutoff(
    grid: Grid,
    delta0: float | None = None,
    delta1: float | None = None,
    psi0_sup: float = 1.0,
) -> CutoffProfile:
    """Construct the cutoff on the grid's vertical nodes.

    chi == 1 on (-delta0, 0], chi == 0 on [-b, -delta1], with a degree-7
    smoothstep across the band.  The peak slope is 35/(16*(delta1-delta0));
    it must not exceed 1/(psi0_sup + 1), which keeps d3phi = 1 + chi'*psi
    strictly positive for surfaces up to the stated amplitude.  Narrower
    bands are rejected rather than silently accepted.
    """
    b = grid.b
    if delta0 is None:
        delta0 = 0.5
    if delta1 is None:
        delta1 = b - 1.0
    # delta0 = 0 / delta1 = b are allowed: the step's first three derivatives
    # vanish at both band ends, so chi(0)=1, chi'(0)=0 hold even then.
    if not (0.0 <= delta0 < delta1 <= b):
        raise ValueError(f"need 0 <= delta0 < delta1 <= b, got {delta0=}, {delta1=}, {b=}")
    width = delta1 - delta0
    slope = 35.0 / (16.0 * width)
    bound = 1.0 / (psi0_sup + 1.0)
    if slope > bound:
        raise CutoffSlopeError(
            f"cutoff slope {slope:.6g} exceeds {bound:.6g} allowed for "
            f"surface amplitude {psi0_sup:.6g}; widen [{-delta1:.6g}, {-delta0:.6g}]"
        )
    z = grid.z
    t = (z + delta1) / width
    tc = np.clip(t, 0.0, 1.0)
    s, s1, s2, s3 = _smoothstep7(tc)
    inside = (t > 0.0) & (t < 1.0)
    chi = np.where(t >= 1.0, 1.0, np.where(t <= 0.0, 0.0, s))
    chi_p = np.where(inside, s1 / width, 0.0)
    chi_pp = np.where(inside, s2 / width**2, 0.0)
    chi_ppp = np.where(inside, s3 / width**3, 0.0)
    return CutoffProfile(
        delta0=float(delta0),
        delta1=float(delta1),
        slope=float(slope),
        chi=chi,
        chi_p=chi_p,
        chi_pp=chi_pp,
        chi_ppp=chi_ppp,
    )


def mean_curvature(psi: np.ndarray, grid: Grid) -> np.ndarray:
    """Mean-curvature operator -div(grad psi / sqrt(1 + |grad psi|^2)).

    The quotient is formed pointwise and then dealiased before the outer
    divergence.  The result has exactly zero surface mean.
    """
    d1 = grid.deriv_tangential(psi, 1)
    d2 = grid.deriv_tangential(psi, 2)
    root = np.sqrt(1.0 + d1 * d1 + d2 * d2)
    q1 = grid.dealias(d1 / root)
    q2 = grid.dealias(d2 / root)
    return -(grid.deriv_tangential(q1, 1) + grid.deriv_tangential(q2, 2))


class GeometrySnapshot:
    """Flattening data for one surface configuration.

    Exposes nodal arrays for the lift phi and all coefficient fields the
    flattened operators use, plus `phi_vderiv`/`dtphi_vderiv`, which return
    d/dx3^m applied to tangential derivatives of phi (or of dt phi) in
    closed form.
    """

    def __init__(self, grid: Grid, cutoff: CutoffProfile, psi: np.ndarray, psi_t: np.ndarray):
        if psi.shape != (grid.nx, grid.ny):
            raise ValueError("surface elevation has the wrong shape")
        self.grid = grid
        self.cutoff = cutoff
        self.psi = psi
        self.psi_t = psi_t

        g = grid
        self.dpsi = (g.deriv_tangential(psi, 1), g.deriv_tangential(psi, 2))
        self.dpsi_t = (g.deriv_tangential(psi_t, 1), g.deriv_tangential(psi_t, 2))
        self.grad_psi_sup = float(np.max(np.sqrt(self.dpsi[0] ** 2 + self.dpsi[1] ** 2)))
        self.norm_N = np.sqrt(1.0 + self.dpsi[0] ** 2 + self.dpsi[1] ** 2)

        chi = cutoff.chi
        chi_p = cutoff.chi_p
        self.phi = g.z[None, None, :] + chi[None, None, :] * psi[:, :, None]
        self.d1phi = chi[None, None, :] * self.dpsi[0][:, :, None]
        self.d2phi = chi[None, None, :] * self.dpsi[1][:, :, None]
        self.d3phi = 1.0 + chi_p[None, None, :] * psi[:, :, None]
        self.dtphi = chi[None, None, :] * psi_t[:, :, None]

        self.min_d3phi = float(np.min(self.d3phi))
        self.depth_margin = float(grid.b - np.max(np.abs(psi)))
        if self.min_d3phi <= 0.0:
            warnings.warn(
                f"degenerate lift: min d3phi = {self.min_d3phi:.3e}", RuntimeWarning
            )

        self.inv_d3phi = 1.0 / self.d3phi
        self.r1 = self.d1phi * self.inv_d3phi
        self.r2 = self.d2phi * self.inv_d3phi

        # Closed-form vertical derivatives of the coefficients.
        chi_pp = cutoff.chi_pp
        p = self.d3phi
        self.d3_d3phi = chi_pp[None, None, :] * psi[:, :, None]
        self.d3_inv_d3phi = -self.d3_d3phi * self.inv_d3phi**2
        self.d3_r1 = (
            chi_p[None, None, :] * self.dpsi[0][:, :, None] - self.r1 * self.d3_d3phi
        ) * self.inv_d3phi
        self.d3_r2 = (
            chi_p[None, None, :] * self.dpsi[1][:, :, None] - self.r2 * self.d3_d3phi
        ) * self.inv_d3phi

        self._column = {}

    # ------------------------------------------------------------------

    def _tangential_psi(self, beta: tuple[int, int], of: str) -> np.ndarray:
        """Cached tangential derivative of psi or psi_t."""
        key = (of, beta)
        if key not in self._column:
            f = self.psi if of == "psi" else self.psi_t
            d = f
            if beta[0]:
                d = self.grid.deriv_tangential(d, 1, beta[0])
            if beta[1]:
                d = self.grid.deriv_tangential(d, 2, beta[1])
            self._column[key] = d
        return self._column[key]

    def _chi_order(self, m: int) -> np.ndarray:
        return (self.cutoff.chi, self.cutoff.chi_p, self.cutoff.chi_pp, self.cutoff.chi_ppp)[m]

    def phi_vderiv(self, m: int, beta: tuple[int, int] = (0, 0)) -> np.ndarray:
        """d^m/dx3^m of the tangential derivative d^beta phi, closed form.

        For beta = 0:  m=0 -> phi, m=1 -> d3phi, m>=2 -> chi^(m) * psi.
        For |beta| >= 1: chi^(m) * d^beta psi at every order m <= 3.
        """
        if not 0 <= m <= 3:
            raise ValueError("vertical order must be 0..3")
        if beta == (0, 0):
            if m == 0:
                return self.phi
            if m == 1:
                return self.d3phi
            return self._chi_order(m)[None, None, :] * self.psi[:, :, None]
        dpsi = self._tangential_psi(beta, "psi")
        return self._chi_order(m)[None, None, :] * dpsi[:, :, None]

    def dtphi_vderiv(self, m: int, beta: tuple[int, int] = (0, 0)) -> np.ndarray:
        """Same as phi_vderiv but for dt phi = chi * psi_t."""
        if not 0 <= m <= 3:
            raise ValueError("vertical order must be 0..3")
        dpsit = self._tangential_psi(beta, "psi_t") if beta != (0, 0) else self.psi_t
        return self._chi_order(m)[None, None, :] * dpsit[:, :, None]

    # ------------------------------------------------------------------

    def surface_normal(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unnormalized upward normal (-d1 psi, -d2 psi, 1) of the surface."""
        return (-self.dpsi[0], -self.dpsi[1], np.ones_like(self.psi))

    def matrix_A(self) -> np.ndarray:
        """Flattening matrix  [d^phi_i f] = A[i,j] d_j f, shape (3,3,nx,ny,nz)."""
        g = self.grid
        zero = np.zeros_like(self.d3phi)
        one = np.ones_like(self.d3phi)
        return np.array(
            [
                [one, zero, -self.r1],
                [zero, one, -self.r2],
                [zero, zero, self.inv_d3phi],
            ]
        )

    def matrix_A_inv(self) -> np.ndarray:
        zero = np.zeros_like(self.d3phi)
        one = np.ones_like(self.d3phi)
        return np.array(
            [
                [one, zero, self.d1phi],
                [zero, one, self.d2phi],
                [zero, zero, self.d3phi],
            ]
        )


def lift_surface(
    psi: np.ndarray,
    psi_t: np.ndarray | None,
    cutoff: CutoffProfile,
    grid: Grid,
) -> GeometrySnapshot:
    """Build the flattening snapshot for (psi, psi_t).

    psi_t may be None for static diagnostics; it then defaults to zero and
    all time-derivative coefficients vanish.
    """
    if psi_t is None:
        psi_t = np.zeros_like(psi)
    return GeometrySnapshot(grid, cutoff, psi, psi_t)


def normal_velocity_trace(v: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Kinematic surface speed v.N = -v1 d1psi - v2 d2psi + v3 on the top.

    This single routine defines the discrete meaning of v.N everywhere in
    the package (kinematic update, Neumann data, good-unknown boundary
    checks), so those consumers agree to rounding.
    """
    g = geom.grid
    v1, v2, v3 = g.top(v[0]), g.top(v[1]), g.top(v[2])
    return -g.pmul(v1, geom.dpsi[0]) - g.pmul(v2, geom.dpsi[1]) + v3
