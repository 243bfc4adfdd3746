"""Flattened differential operators and commutator identities.

Every operator here acts on fields over the fixed slab but represents a
derivative over the moving fluid domain, obtained by conjugating with the
surface lift:

    d^phi_a f = d_a f - r_a d3 f   (a = 1, 2),     r_a = (d_a phi)/(d3 phi)
    d^phi_3 f = s d3 f,                             s  = 1/(d3 phi)

Pointwise products of spectral fields are always routed through the grid's
2/3-rule filter (`pmul`).  Vertical derivatives of geometry coefficients are
never taken with the collocation matrix; they come from the closed forms
stored on the GeometrySnapshot (the cutoff is only C^3, and numerical
differentiation across its transition band would dominate every identity
residual in this module).

The second half of the file evaluates, term by term, the exact commutation
identities between tangential derivatives and the flattened operators that
underlie the surface-adapted energy estimates.  The evaluators assemble both
sides from the same discrete primitives so the reported residual measures
genuine identity error, not evaluation-order noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .geometry import GeometrySnapshot, normal_velocity_trace
from .grid import Grid

Alpha = tuple[int, int]


def tangential_deriv(f: np.ndarray, alpha: Alpha, grid: Grid) -> np.ndarray:
    """Mixed tangential derivative d1^a1 d2^a2 of a surface or volume field."""
    d = f
    if alpha[0]:
        d = grid.deriv_tangential(d, 1, alpha[0])
    if alpha[1]:
        d = grid.deriv_tangential(d, 2, alpha[1])
    return d


# ----------------------------------------------------------------------
# first-order operators


def vertical_phi_deriv(f: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """d^phi_3 f = s * d3 f."""
    return geom.grid.pmul(geom.inv_d3phi, geom.grid.deriv_vertical(f))


def grad_phi(f: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    g = geom.grid
    fz = g.deriv_vertical(f)
    return np.stack(
        [
            g.deriv_tangential(f, 1) - g.pmul(geom.r1, fz),
            g.deriv_tangential(f, 2) - g.pmul(geom.r2, fz),
            g.pmul(geom.inv_d3phi, fz),
        ]
    )


def div_phi(X: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    g = geom.grid
    z1 = g.deriv_vertical(X[0])
    z2 = g.deriv_vertical(X[1])
    z3 = g.deriv_vertical(X[2])
    return (
        g.deriv_tangential(X[0], 1)
        - g.pmul(geom.r1, z1)
        + g.deriv_tangential(X[1], 2)
        - g.pmul(geom.r2, z2)
        + g.pmul(geom.inv_d3phi, z3)
    )


def curl_phi(X: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    g = geom.grid

    def d_a(f, a, fz):
        r = geom.r1 if a == 1 else geom.r2
        return g.deriv_tangential(f, a) - g.pmul(r, fz)

    z1 = g.deriv_vertical(X[0])
    z2 = g.deriv_vertical(X[1])
    z3 = g.deriv_vertical(X[2])
    d3 = lambda fz: g.pmul(geom.inv_d3phi, fz)
    return np.stack(
        [
            d_a(X[2], 2, z3) - d3(z2),
            d3(z1) - d_a(X[2], 1, z3),
            d_a(X[1], 1, z2) - d_a(X[0], 2, z1),
        ]
    )


def laplace_phi(f: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Flattened Laplacian as the literal composition div^phi grad^phi.

    Kept as a composition (with the 2/3 filter inside each stage) so that
    solving  div^phi grad^phi lam = div^phi v  makes the projected field's
    divergence agree with the linear-solver residual exactly.  The pressure
    solver uses the analytically expanded form instead; see elliptic.py.
    """
    return div_phi(grad_phi(f, geom), geom)


def advection_speed(
    v: np.ndarray, geom: GeometrySnapshot, dt_phi: np.ndarray | None = None
) -> np.ndarray:
    """Vertical transport coefficient (v . bfN - dt phi) / d3 phi.

    bfN = (-d1 phi, -d2 phi, 1) is the interior extension of the surface
    normal.  On the top boundary this coefficient vanishes identically when
    the kinematic condition holds.
    """
    g = geom.grid
    if dt_phi is None:
        dt_phi = geom.dtphi
    v_dot_bfN = -g.pmul(v[0], geom.d1phi) - g.pmul(v[1], geom.d2phi) + v[2]
    return g.pmul(v_dot_bfN - dt_phi, geom.inv_d3phi)


def advect(
    v: np.ndarray,
    f: np.ndarray,
    geom: GeometrySnapshot,
    dt_phi: np.ndarray | None = None,
    speed: np.ndarray | None = None,
) -> np.ndarray:
    """Material transport v1 d1 f + v2 d2 f + w d3 f of a scalar field.

    `speed` lets callers reuse one advection coefficient across several
    transported fields within a single stage.
    """
    g = geom.grid
    if speed is None:
        speed = advection_speed(v, geom, dt_phi)
    return (
        g.pmul(v[0], g.deriv_tangential(f, 1))
        + g.pmul(v[1], g.deriv_tangential(f, 2))
        + g.pmul(speed, g.deriv_vertical(f))
    )


def advect_vector(
    v: np.ndarray,
    X: np.ndarray,
    geom: GeometrySnapshot,
    dt_phi: np.ndarray | None = None,
) -> np.ndarray:
    speed = advection_speed(v, geom, dt_phi)
    return np.stack([advect(v, X[i], geom, dt_phi, speed=speed) for i in range(3)])


def advect_given_vertical(
    v: np.ndarray,
    f: np.ndarray,
    fz: np.ndarray,
    geom: GeometrySnapshot,
    dt_phi: np.ndarray | None = None,
    speed: np.ndarray | None = None,
) -> np.ndarray:
    """Transport with a caller-supplied vertical derivative of f.

    Identity evaluators transport fields that contain the vertical cutoff as
    a factor; differentiating those with the collocation matrix would floor
    every residual near 1e-7.  Callers expand d3 f by the product rule with
    the closed-form cutoff derivatives and pass the result here.
    """
    g = geom.grid
    if speed is None:
        speed = advection_speed(v, geom, dt_phi)
    return (
        g.pmul(v[0], g.deriv_tangential(f, 1))
        + g.pmul(v[1], g.deriv_tangential(f, 2))
        + g.pmul(speed, fz)
    )


def jacobian_phi(v: np.ndarray, geom: GeometrySnapshot) -> list[list[np.ndarray]]:
    """J[i][j] = d^phi_i v^j."""
    cols = [grad_phi(v[j], geom) for j in range(3)]
    return [[cols[j][i] for j in range(3)] for i in range(3)]


def pressure_source(v: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Double contraction sum_ij d^phi_i v^j d^phi_j v^i.

    This is the source of the pressure problem -lap^phi q = source.
    """
    g = geom.grid
    J = jacobian_phi(v, geom)
    out = np.zeros_like(v[0])
    for i in range(3):
        for j in range(3):
            out += g.pmul(J[i][j], J[j][i])
    return out


def normal_flux_top(q: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """N . grad^phi q on the top boundary, expanded in surface terms.

    Equals -d1psi d1q - d2psi d2q + (1 + |dpsi|^2) d3q at x3 = 0.  This is
    the single discrete definition used both to assemble Neumann boundary
    rows and to verify fluxes, so the two agree to rounding.
    """
    g = geom.grid
    qt = g.top(q)
    qzt = g.top(g.deriv_vertical(q))
    p1, p2 = geom.dpsi
    coef = 1.0 + g.pmul(p1, p1) + g.pmul(p2, p2)
    return (
        -g.pmul(p1, g.deriv_tangential(qt, 1))
        - g.pmul(p2, g.deriv_tangential(qt, 2))
        + g.pmul(coef, qzt)
    )


# ----------------------------------------------------------------------
# good unknowns


def good_unknowns(
    v: np.ndarray, q: np.ndarray, geom: GeometrySnapshot, alpha: Alpha
) -> tuple[np.ndarray, np.ndarray]:
    """Surface-adapted unknowns for the tangential derivative d^alpha.

    V_i = d^alpha v_i - (d^phi_3 v_i) d^alpha phi, and likewise Q from q.
    Subtracting the lift term removes the loss of tangential regularity
    caused by differentiating through the moving coordinate change.
    """
    g = geom.grid
    Tphi = geom.phi_vderiv(0, alpha)
    V = np.stack(
        [
            tangential_deriv(v[i], alpha, g)
            - g.pmul(vertical_phi_deriv(v[i], geom), Tphi)
            for i in range(3)
        ]
    )
    Q = tangential_deriv(q, alpha, g) - g.pmul(vertical_phi_deriv(q, geom), Tphi)
    return V, Q


# ----------------------------------------------------------------------
# commutator machinery


def commutator_product(grid: Grid, alpha: Alpha, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """[T, g] h = T(gh) - g Th for T = d^alpha."""
    T = lambda f: tangential_deriv(f, alpha, grid)
    return T(grid.pmul(g, h)) - grid.pmul(g, T(h))


def commutator_symmetric(grid: Grid, alpha: Alpha, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """[T, g, h] = T(gh) - g Th - h Tg for T = d^alpha."""
    T = lambda f: tangential_deriv(f, alpha, grid)
    return T(grid.pmul(g, h)) - grid.pmul(g, T(h)) - grid.pmul(h, T(g))


def split_alpha(alpha: Alpha) -> tuple[Alpha, Alpha]:
    """Fixed unit split alpha = alpha' + rest used by the remainder terms.

    The identities hold for any single split; the first nonzero direction
    is chosen deterministically.
    """
    if alpha[0] > 0:
        return (1, 0), (alpha[0] - 1, alpha[1])
    if alpha[1] > 0:
        return (0, 1), (alpha[0], alpha[1] - 1)
    raise ValueError("remainder terms need |alpha| >= 1")


def _stretch_square_bracket(geom: GeometrySnapshot, alpha: Alpha) -> np.ndarray:
    """[d^(alpha-alpha'), 1/(d3 phi)^2] d^(alpha') d3 phi.

    The inner factor d^(alpha') d3 phi is the closed form chi' d^(alpha')psi.
    """
    alpha_prime, rest = split_alpha(alpha)
    m = geom.inv_d3phi * geom.inv_d3phi
    h = geom.phi_vderiv(1, alpha_prime)
    return commutator_product(geom.grid, rest, m, h)


@dataclass(frozen=True)
class IdentityCheck:
    """Residual field of an exact-identity evaluation plus its L2 size."""

    norm: float
    field: np.ndarray


def _vertical_derivs(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    fz = grid.deriv_vertical(f)
    return fz, grid.deriv_vertical(fz)


def _dz_dphi_component(
    f: np.ndarray, geom: GeometrySnapshot, i: int, fz: np.ndarray, fzz: np.ndarray
) -> np.ndarray:
    """d3 (d^phi_i f), expanded so d3 never hits a geometry coefficient."""
    g = geom.grid
    if i == 3:
        return g.pmul(geom.d3_inv_d3phi, fz) + g.pmul(geom.inv_d3phi, fzz)
    r = geom.r1 if i == 1 else geom.r2
    dr = geom.d3_r1 if i == 1 else geom.d3_r2
    dif = g.deriv_tangential(f, i)
    return g.deriv_vertical(dif) - g.pmul(dr, fz) - g.pmul(r, fzz)


def alinhac_lower_remainder(
    f: np.ndarray,
    geom: GeometrySnapshot,
    alpha: Alpha,
    i: int,
    fz: np.ndarray | None = None,
) -> np.ndarray:
    """Remainder R^1_i(f) in the commutation of d^alpha with d^phi_i.

    Built from symmetric commutators of the operator coefficients; contains
    no derivatives of the good unknown itself.
    """
    g = geom.grid
    if fz is None:
        fz = g.deriv_vertical(f)
    bracket = _stretch_square_bracket(geom, alpha)
    if i == 3:
        return commutator_symmetric(g, alpha, geom.inv_d3phi, fz) - g.pmul(fz, bracket)
    r = geom.r1 if i == 1 else geom.r2
    dphi_i = geom.d1phi if i == 1 else geom.d2phi
    return (
        -commutator_symmetric(g, alpha, r, fz)
        - g.pmul(fz, commutator_symmetric(g, alpha, dphi_i, geom.inv_d3phi))
        + g.pmul(g.pmul(fz, dphi_i), bracket)
    )


def alinhac_full_remainder(
    f: np.ndarray, geom: GeometrySnapshot, alpha: Alpha, i: int
) -> np.ndarray:
    """R^2_i(f) = R^1_i(f) + d^phi_3 d^phi_i f * d^alpha phi."""
    g = geom.grid
    fz, fzz = _vertical_derivs(f, g)
    dz_dphi_i = _dz_dphi_component(f, geom, i, fz, fzz)
    extra = g.pmul(g.pmul(geom.inv_d3phi, dz_dphi_i), geom.phi_vderiv(0, alpha))
    return alinhac_lower_remainder(f, geom, alpha, i, fz=fz) + extra


def alinhac_identity_residual(
    f: np.ndarray, geom: GeometrySnapshot, alpha: Alpha, i: int
) -> IdentityCheck:
    """Residual of d^alpha d^phi_i f = d^phi_i(F) + R^2_i(f).

    F is the good unknown of f.  The left side differentiates the operator
    output directly; the right side differentiates the good unknown and adds
    the remainder, with every vertical derivative of a geometry factor taken
    in closed form.  For the flat surface both sides collapse to the same
    spectral expression and the residual is rounding-level.
    """
    if i not in (1, 2, 3):
        raise ValueError("component index must be 1, 2, or 3")
    g = geom.grid
    T = lambda h: tangential_deriv(h, alpha, g)
    fz, fzz = _vertical_derivs(f, g)

    if i == 3:
        lhs = T(g.pmul(geom.inv_d3phi, fz))
    else:
        r = geom.r1 if i == 1 else geom.r2
        lhs = T(g.deriv_tangential(f, i) - g.pmul(r, fz))

    Tphi = geom.phi_vderiv(0, alpha)
    dz_Tphi = geom.phi_vderiv(1, alpha)
    w_lift = g.pmul(geom.inv_d3phi, fz)
    dz_w_lift = g.pmul(geom.d3_inv_d3phi, fz) + g.pmul(geom.inv_d3phi, fzz)
    F = T(f) - g.pmul(w_lift, Tphi)
    dz_F = g.deriv_vertical(T(f)) - g.pmul(dz_w_lift, Tphi) - g.pmul(w_lift, dz_Tphi)

    if i == 3:
        dphi_F = g.pmul(geom.inv_d3phi, dz_F)
    else:
        r = geom.r1 if i == 1 else geom.r2
        dphi_F = g.deriv_tangential(F, i) - g.pmul(r, dz_F)

    rhs = dphi_F + alinhac_full_remainder(f, geom, alpha, i)
    field = lhs - rhs
    return IdentityCheck(norm=geom.grid.l2_volume(field), field=field)


def advective_commutator_remainder(
    f: np.ndarray,
    v: np.ndarray,
    geom: GeometrySnapshot,
    alpha: Alpha,
    dt_phi: np.ndarray | None = None,
) -> np.ndarray:
    """Purely spatial part R~3(f) of the material-derivative commutator.

    d^alpha (D_t f) = D_t(F) + D_t(d^phi_3 f) d^alpha phi + R~3(f); this
    returns the last piece, which involves only commutators of the transport
    coefficients with d^alpha at a single time.
    """
    g = geom.grid
    if dt_phi is None:
        dt_phi = geom.dtphi
    fz = g.deriv_vertical(f)

    # [T, vbar] . dbar f
    out = commutator_product(g, alpha, v[0], g.deriv_tangential(f, 1))
    out += commutator_product(g, alpha, v[1], g.deriv_tangential(f, 2))

    # d^phi_3 f [T, v] . bfN, bfN = (-d1 phi, -d2 phi, 1)
    comm_vN = (
        commutator_product(g, alpha, v[0], -geom.d1phi)
        + commutator_product(g, alpha, v[1], -geom.d2phi)
        + commutator_product(g, alpha, v[2], np.ones_like(f))
    )
    out += g.pmul(g.pmul(geom.inv_d3phi, fz), comm_vN)

    # [T, w, d3 f]
    w = advection_speed(v, geom, dt_phi)
    out += commutator_symmetric(g, alpha, w, fz)

    # [T, v.bfN - dt phi, 1/d3 phi] d3 f
    v_dot_bfN = -g.pmul(v[0], geom.d1phi) - g.pmul(v[1], geom.d2phi) + v[2]
    flux = v_dot_bfN - dt_phi
    out += g.pmul(commutator_symmetric(g, alpha, flux, geom.inv_d3phi), fz)

    # -(v.bfN - dt phi) d3 f [d^(alpha-alpha'), 1/(d3 phi)^2] d^(alpha') d3 phi
    out -= g.pmul(g.pmul(flux, fz), _stretch_square_bracket(geom, alpha))
    return out


def higher_kinematic_residual(
    v: np.ndarray, geom: GeometrySnapshot, alpha: Alpha
) -> IdentityCheck:
    """Residual of the differentiated kinematic boundary condition.

    With T = d^alpha (|alpha| = 3) and V the good-unknown velocity, checks

        T(v.N) + vbar . dbar(T psi) - V.N - S = 0   on the top boundary,

    where S collects the lift correction (d^phi_3 v . N) T psi and the
    mixed Leibniz terms binom(alpha, beta') d^beta' v . d^beta'' N over
    |beta'| in {1, 2}.  All dot products with N share one discrete helper
    so the cancellation structure survives the 2/3 filter.
    """
    g = geom.grid
    p1, p2 = geom.dpsi

    def dot_N(u1, u2, u3):
        return -g.pmul(u1, p1) - g.pmul(u2, p2) + u3

    psi_t = normal_velocity_trace(v, geom)
    Tpsi = tangential_deriv(geom.psi, alpha, g)
    lhs = tangential_deriv(psi_t, alpha, g)
    v1t, v2t = g.top(v[0]), g.top(v[1])
    lhs += g.pmul(v1t, g.deriv_tangential(Tpsi, 1)) + g.pmul(
        v2t, g.deriv_tangential(Tpsi, 2)
    )

    V, _ = good_unknowns(v, np.zeros_like(v[0]), geom, alpha)
    vn_good = dot_N(g.top(V[0]), g.top(V[1]), g.top(V[2]))

    d3p_v = [g.top(vertical_phi_deriv(v[i], geom)) for i in range(3)]
    lift_term = dot_N(
        g.pmul(d3p_v[0], Tpsi), g.pmul(d3p_v[1], Tpsi), g.pmul(d3p_v[2], Tpsi)
    )

    mixed = np.zeros_like(Tpsi)
    for b1 in range(alpha[0] + 1):
        for b2 in range(alpha[1] + 1):
            order = b1 + b2
            if order in (0, alpha[0] + alpha[1]):
                continue
            beta = (b1, b2)
            rest = (alpha[0] - b1, alpha[1] - b2)
            c = comb(alpha[0], b1) * comb(alpha[1], b2)
            dvx = tangential_deriv(v1t, beta, g)
            dvy = tangential_deriv(v2t, beta, g)
            mixed -= c * (
                g.pmul(dvx, tangential_deriv(p1, rest, g))
                + g.pmul(dvy, tangential_deriv(p2, rest, g))
            )

    field = lhs - vn_good - lift_term - mixed
    return IdentityCheck(norm=g.l2_surface(field), field=field)
