"""Elliptic solves on the flattened slab.

All four boundary-value problems in this package share one structure: a
flattened Laplacian in the interior, a top boundary row (Dirichlet trace or
oblique Neumann flux), and a homogeneous vertical-derivative row at the flat
bottom.  They are solved with GMRES preconditioned by the exact inverse of
the flat-surface (psi = 0) operator, factored once per grid and reused; with
moderate surface slopes the preconditioned system sits near the identity and
converges in a handful of iterations.

Two distinct interior operators appear deliberately:

* the pressure problems use the analytically expanded Laplacian, whose
  coefficient fields (and their vertical derivatives) come from the closed
  cutoff forms, keeping the truncation error spectral even though the
  cutoff is only C^3;
* the projection solve uses the literal composition div^phi grad^phi, so
  that the divergence of the projected field equals the linear-solver
  residual by construction rather than by analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .geometry import GeometrySnapshot, mean_curvature
from .grid import Grid
from .operators import div_phi, grad_phi, laplace_phi, normal_flux_top, pressure_source

DEFAULT_RTOL = 1e-10
DEFAULT_MAXITER = 500


class EllipticSolveError(RuntimeError):
    """GMRES failed to reach the requested residual within the iteration cap."""


@dataclass
class PressureSolution:
    q: np.ndarray
    variant: str
    residual: float
    iterations: int
    incompatibility: float = 0.0


@dataclass
class ProjectionReport:
    iterations: int
    residual: float
    div_before: float
    div_after: float


# ----------------------------------------------------------------------
# expanded interior operator


def _expanded_coefficients(geom: GeometrySnapshot) -> dict:
    """Coefficient fields of the expanded flattened Laplacian.

    lap^phi q = (d11 + d22) q - 2 r1 d1d3 q - 2 r2 d2d3 q
                + (r1^2 + r2^2 + s^2) d3d3 q + B d3 q,
    B = -d1 r1 - d2 r2 + r1 d3 r1 + r2 d3 r2 + s d3 s.

    Tangential derivatives of the coefficients are closed forms in psi's
    spectral derivatives; vertical ones come from the cutoff derivatives.
    """
    cache = getattr(geom, "_elliptic_coeffs", None)
    if cache is not None:
        return cache
    g = geom.grid
    chi = geom.cutoff.chi[None, None, :]
    chi_p = geom.cutoff.chi_p[None, None, :]
    s = geom.inv_d3phi
    p = geom.d3phi
    psi = geom.psi
    d11psi = g.deriv_tangential(psi, 1, 2)
    d22psi = g.deriv_tangential(psi, 2, 2)
    # d_a r_a = (chi d_aa psi * p - chi d_a psi * chi' d_a psi) / p^2
    d1r1 = (chi * d11psi[:, :, None] * p - geom.d1phi * chi_p * geom.dpsi[0][:, :, None]) * s * s
    d2r2 = (chi * d22psi[:, :, None] * p - geom.d2phi * chi_p * geom.dpsi[1][:, :, None]) * s * s
    B = (
        -d1r1
        - d2r2
        + geom.r1 * geom.d3_r1
        + geom.r2 * geom.d3_r2
        + s * geom.d3_inv_d3phi
    )
    coeffs = {
        "cross1": -2.0 * geom.r1,
        "cross2": -2.0 * geom.r2,
        "czz": geom.r1**2 + geom.r2**2 + s**2,
        "cz": B,
    }
    geom._elliptic_coeffs = coeffs
    return coeffs


def laplace_phi_expanded(q: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    g = geom.grid
    c = _expanded_coefficients(geom)
    qh = np.fft.rfft2(q, axes=(0, 1))
    k1 = g.k1[:, None, None]
    k2 = g._k2_half[None, :, None]
    s2 = (g.nx, g.ny)
    lap_tan = np.fft.irfft2(-(k1**2 + k2**2) * qh, s=s2, axes=(0, 1))
    m1 = (1j * k1) * g._nyq1[:, None, None]
    m2 = np.where(2 * g._k2_half == g.ny, 0.0, 1.0)[None, :, None] * (1j * k2)
    d1q = np.fft.irfft2(m1 * qh, s=s2, axes=(0, 1))
    d2q = np.fft.irfft2(m2 * qh, s=s2, axes=(0, 1))
    qz = g.deriv_vertical(q)
    qzz = g.deriv_vertical(qz)
    d1qz = g.deriv_vertical(d1q)
    d2qz = g.deriv_vertical(d2q)
    # One filter pass over the summed products equals filtering each product.
    prod = c["cross1"] * d1qz + c["cross2"] * d2qz + c["czz"] * qzz + c["cz"] * qz
    return lap_tan + g.dealias(prod)


# ----------------------------------------------------------------------
# flat per-mode factorizations


def _flat_inverse(grid: Grid, top: str, sign: float) -> np.ndarray:
    """Per-tangential-mode inverse of the flat operator, shape (nx, ny, nz, nz).

    Rows: interior sign*(Dz^2 - |k|^2), top row Dirichlet identity or flat
    Neumann flux (plus the mean pin for the zero mode), bottom row Dz.
    """
    key = ("flat_inv", top, sign)
    if key in grid._cache:
        return grid._cache[key]
    nz = grid.nz
    k2 = grid.kx_2d**2 + grid.ky_2d**2
    eye = np.eye(nz)
    mats = sign * (grid.Dz2[None, None] - k2[:, :, None, None] * eye[None, None])
    mats[:, :, 0, :] = eye[0] if top == "dirichlet" else grid.Dz[0, :]
    if top == "neumann":
        mats[k2 == 0.0, 0, 0] += 1.0
    mats[:, :, -1, :] = grid.Dz[-1, :]
    inv = np.linalg.inv(mats)
    grid._cache[key] = inv
    return inv


def _flat_solve(r: np.ndarray, grid: Grid, top: str, sign: float) -> np.ndarray:
    inv = _flat_inverse(grid, top, sign)[:, : grid.ny // 2 + 1]
    rh = np.fft.rfft2(r, axes=(0, 1))
    xh = np.einsum("xyij,xyj->xyi", inv, rh)
    return np.fft.irfft2(xh, s=(grid.nx, grid.ny), axes=(0, 1))


# ----------------------------------------------------------------------
# generic boundary-value solve


def _surface_mean(f2d: np.ndarray) -> float:
    return float(np.mean(f2d))


def _solve_bvp(
    geom: GeometrySnapshot,
    interior_apply,
    top_apply,
    rhs_interior: np.ndarray,
    rhs_top: np.ndarray,
    top: str,
    sign: float,
    rtol: float,
    maxiter: int,
    abs_tol: float = 0.0,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int]:
    """GMRES on the square system (interior rows, top row, bottom row).

    `abs_tol` is an absolute residual floor below which the solve counts as
    converged regardless of the relative target; callers use it when the
    right-hand side may already sit at rounding level (re-projecting an
    almost divergence-free field), where a relative tolerance is unreachable.
    """
    g = geom.grid
    shape = (g.nx, g.ny, g.nz)
    n = g.nx * g.ny * g.nz

    def assemble(q3d: np.ndarray) -> np.ndarray:
        out = interior_apply(q3d)
        out[:, :, 0] = top_apply(q3d)
        out[:, :, -1] = g.deriv_vertical(q3d)[:, :, -1]
        return out

    def matvec(x: np.ndarray) -> np.ndarray:
        return assemble(x.reshape(shape)).ravel()

    def psolve(x: np.ndarray) -> np.ndarray:
        return _flat_solve(x.reshape(shape), g, top, sign).ravel()

    b = np.empty(shape)
    b[:, :, :] = rhs_interior
    b[:, :, 0] = rhs_top
    b[:, :, -1] = 0.0
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0 or bnorm <= abs_tol:
        return np.zeros(shape), 0.0, 0

    A = LinearOperator((n, n), matvec=matvec)
    M = LinearOperator((n, n), matvec=psolve)
    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    restart = min(80, n)
    outer = max(1, int(np.ceil(maxiter / restart)))
    x, info = gmres(
        A,
        b.ravel(),
        x0=None if x0 is None else x0.ravel(),
        rtol=rtol,
        atol=abs_tol,
        restart=restart,
        maxiter=outer,
        M=M,
        callback=cb,
        callback_type="pr_norm",
    )
    q = x.reshape(shape)
    abs_res = float(np.linalg.norm(b.ravel() - matvec(x)))
    true_res = abs_res / bnorm
    if info != 0 and abs_res > max(abs_tol, 1e-6 * bnorm):
        raise EllipticSolveError(
            f"GMRES stopped after {count['n']} iterations, relative residual {true_res:.3e}"
        )
    return q, true_res, count["n"]


# ----------------------------------------------------------------------
# public solves


def solve_pressure_dirichlet(
    v: np.ndarray,
    geom: GeometrySnapshot,
    sigma: float,
    rtol: float = DEFAULT_RTOL,
    maxiter: int = DEFAULT_MAXITER,
    source: np.ndarray | None = None,
    top_trace: np.ndarray | None = None,
    x0: np.ndarray | None = None,
) -> PressureSolution:
    """Pressure with capillary Dirichlet data on the top boundary.

    Solves -lap^phi q = sum_ij d^phi_i v^j d^phi_j v^i with
    q|top = sigma * curvature(psi) and zero vertical flux at the bottom.
    `source`/`top_trace` allow manufactured-solution overrides; `x0` warm
    starts the Krylov iteration (a nearby pressure from the previous stage).
    """
    g = geom.grid
    f = pressure_source(v, geom) if source is None else source
    if top_trace is None:
        top_trace = sigma * mean_curvature(geom.psi, g)
    q, res, its = _solve_bvp(
        geom,
        interior_apply=lambda q3d: -laplace_phi_expanded(q3d, geom),
        top_apply=lambda q3d: g.top(q3d),
        rhs_interior=f,
        rhs_top=top_trace,
        top="dirichlet",
        sign=-1.0,
        rtol=rtol,
        maxiter=maxiter,
        x0=x0,
    )
    return PressureSolution(q=q, variant="dirichlet", residual=res, iterations=its)


def neumann_pressure_data(
    v: np.ndarray, geom: GeometrySnapshot, psi_tt: np.ndarray
) -> np.ndarray:
    """Top flux data -(vbar . dbar v) . N - psi_tt - vbar . dbar(v . N)."""
    g = geom.grid
    from .geometry import normal_velocity_trace

    v1t, v2t = g.top(v[0]), g.top(v[1])
    adv = []
    for i in range(3):
        vit = g.top(v[i])
        adv.append(
            g.pmul(v1t, g.deriv_tangential(vit, 1)) + g.pmul(v2t, g.deriv_tangential(vit, 2))
        )
    p1, p2 = geom.dpsi
    adv_dot_N = -g.pmul(adv[0], p1) - g.pmul(adv[1], p2) + adv[2]
    vn = normal_velocity_trace(v, geom)
    transport_vn = g.pmul(v1t, g.deriv_tangential(vn, 1)) + g.pmul(
        v2t, g.deriv_tangential(vn, 2)
    )
    return -adv_dot_N - psi_tt - transport_vn


def solve_pressure_neumann(
    v: np.ndarray,
    geom: GeometrySnapshot,
    psi_tt: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    maxiter: int = DEFAULT_MAXITER,
    source: np.ndarray | None = None,
    top_flux: np.ndarray | None = None,
    mean_target: float = 0.0,
) -> PressureSolution:
    """Pressure with oblique Neumann data on the top boundary.

    The pure-flux problem fixes q only up to a constant, so the top rows are
    augmented with the surface mean of q, pinned to `mean_target` (zero by
    default, matching the mean of the capillary Dirichlet trace).  The
    interior source is shifted by a constant to meet the flux compatibility
    relation; the size of that shift is reported as `incompatibility`.
    """
    g = geom.grid
    f = pressure_source(v, geom) if source is None else source
    if top_flux is None:
        top_flux = neumann_pressure_data(v, geom, psi_tt)

    # Compatibility: -int f d3phi dV must equal the total top flux.
    mismatch = g.integrate_surface(top_flux) + g.integrate_volume(f * geom.d3phi)
    weight = g.integrate_volume(geom.d3phi)
    f = f - mismatch / weight

    def top_apply(q3d: np.ndarray) -> np.ndarray:
        return normal_flux_top(q3d, geom) + _surface_mean(g.top(q3d))

    q, res, its = _solve_bvp(
        geom,
        interior_apply=lambda q3d: -laplace_phi_expanded(q3d, geom),
        top_apply=top_apply,
        rhs_interior=f,
        rhs_top=top_flux + mean_target,
        top="neumann",
        sign=-1.0,
        rtol=rtol,
        maxiter=maxiter,
    )
    return PressureSolution(
        q=q,
        variant="neumann",
        residual=res,
        iterations=its,
        incompatibility=float(abs(mismatch)),
    )


def harmonic_extension(
    beta: np.ndarray,
    geom: GeometrySnapshot,
    rtol: float = DEFAULT_RTOL,
    maxiter: int = DEFAULT_MAXITER,
) -> np.ndarray:
    """Flattened-harmonic field with prescribed top flux and zero bottom flux.

    Solves lap^phi xi = 0, N . grad^phi xi = beta - mean(beta) on top,
    d3 xi = 0 at the bottom, with the top surface mean of xi pinned to zero.
    """
    g = geom.grid
    beta0 = beta - np.mean(beta)

    def top_apply(q3d: np.ndarray) -> np.ndarray:
        return normal_flux_top(q3d, geom) + _surface_mean(g.top(q3d))

    xi, _, _ = _solve_bvp(
        geom,
        interior_apply=lambda q3d: laplace_phi_expanded(q3d, geom),
        top_apply=top_apply,
        rhs_interior=np.zeros((g.nx, g.ny, g.nz)),
        rhs_top=beta0,
        top="neumann",
        sign=1.0,
        rtol=rtol,
        maxiter=maxiter,
    )
    return xi


def project_divergence_free(
    v: np.ndarray,
    geom: GeometrySnapshot,
    rtol: float = DEFAULT_RTOL,
    maxiter: int = DEFAULT_MAXITER,
) -> tuple[np.ndarray, ProjectionReport]:
    """Remove the gradient part of v so that div^phi v vanishes.

    Solves div^phi grad^phi lam = div^phi v with lam|top = 0 and zero
    vertical derivative at the bottom, then subtracts grad^phi lam.  Using
    the composed operator makes the post-projection divergence equal the
    solver residual; the bottom row preserves the impermeability flux.
    """
    g = geom.grid
    d = div_phi(v, geom)
    div_before = g.l2_volume(d)
    if div_before == 0.0:
        return v, ProjectionReport(iterations=0, residual=0.0, div_before=0.0, div_after=0.0)
    # Restrict the solve to the dealiased band: the composed operator maps
    # that band to itself, and any content beyond it is aliasing junk the
    # gradient correction could not remove anyway.  The absolute floor stops
    # GMRES from grinding on a rounding-level rhs when v is already clean.
    scale = float(np.sqrt(np.mean(v**2)))
    lam, res, its = _solve_bvp(
        geom,
        interior_apply=lambda q3d: laplace_phi(q3d, geom),
        top_apply=lambda q3d: g.top(q3d),
        rhs_interior=g.dealias(d),
        rhs_top=np.zeros((g.nx, g.ny)),
        top="dirichlet",
        sign=1.0,
        rtol=rtol,
        maxiter=maxiter,
        abs_tol=1e-12 * (1.0 + scale),
    )
    v_new = v - grad_phi(lam, geom)
    div_after = g.l2_volume(div_phi(v_new, geom))
    return v_new, ProjectionReport(
        iterations=its, residual=res, div_before=div_before, div_after=div_after
    )
