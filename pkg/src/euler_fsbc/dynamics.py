"""Time evolution of the velocity/surface pair on the fixed slab.

The state is (v, psi); at every Runge-Kutta stage the geometry is rebuilt
from the stage's own surface and its kinematic velocity trace (the time
slope of the lift is never lagged), and the pressure is solved fresh with
the capillary Dirichlet trace.  Explicit RK4 under a capillary CFL bound
keeps every term of the momentum equation literal in the right-hand side.

A fixed-lid test mode freezes the surface: the kinematic update is
disabled, the lid's time slope is identically zero, and after each full
step the velocity is made tangent to the lid by subtracting the gradient
of a harmonic extension of its normal trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import (
    PressureSolution,
    harmonic_extension,
    project_divergence_free,
    solve_pressure_dirichlet,
)
from .geometry import CutoffProfile, GeometrySnapshot, lift_surface, normal_velocity_trace
from .grid import Grid
from .operators import advect_vector, advection_speed, div_phi, grad_phi


class GeometryDegenerateError(RuntimeError):
    """Raised when the lift stops being a diffeomorphism (halt condition: geometry)."""

    def __init__(self, message: str, quantity: str, value: float):
        super().__init__(message)
        self.quantity = quantity
        self.value = value


@dataclass
class State:
    t: float
    v: np.ndarray
    psi: np.ndarray

    def copy(self) -> "State":
        return State(t=self.t, v=self.v.copy(), psi=self.psi.copy())


@dataclass(frozen=True)
class StepReport:
    dt: float
    pressure_iterations: int
    pressure_residual: float
    div_norm: float
    bottom_flux_norm: float
    projected: bool


@dataclass(frozen=True)
class StepperSettings:
    sigma: float
    safety: float = 0.4
    eps_geo: float = 1e-6
    elliptic_rtol: float = 1e-10
    elliptic_maxiter: int = 500
    projection_cadence: int = 1
    fixed_lid: bool = False


def compute_psi_t(v: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Kinematic surface velocity: the normal trace of v at the top."""
    return normal_velocity_trace(v, geom)


def compute_dt_v(v: np.ndarray, geom: GeometrySnapshot, q: np.ndarray) -> np.ndarray:
    """Momentum right-hand side: minus advection minus the pressure gradient."""
    return -advect_vector(v, v, geom) - grad_phi(q, geom)


def compute_psi_tt(
    v: np.ndarray, geom: GeometrySnapshot, dt_v: np.ndarray
) -> np.ndarray:
    """Second time slope of the surface from the differentiated kinematic trace."""
    g = geom.grid
    accel_normal = normal_velocity_trace(dt_v, geom)
    v1t, v2t = g.top(v[0]), g.top(v[1])
    d1pt, d2pt = geom.dpsi_t
    return accel_normal - g.pmul(v1t, d1pt) - g.pmul(v2t, d2pt)


def cfl_dt(
    v: np.ndarray, geom: GeometrySnapshot, sigma: float, safety: float
) -> float:
    """Stable step from the capillary, tangential, and vertical constraints."""
    g = geom.grid
    dx = 2.0 * np.pi / max(g.nx, g.ny)
    tiny = 1e-14
    capillary = dx**1.5 / np.sqrt(sigma * np.pi)
    vbar_sup = max(np.max(np.abs(v[0])), np.max(np.abs(v[1])))
    tangential = dx / (vbar_sup + tiny)
    w = advection_speed(v, geom)
    dz_min = float(np.min(-np.diff(g.z)))
    vertical = dz_min / (np.max(np.abs(w)) + tiny)
    return safety * min(capillary, tangential, vertical)


class Stepper:
    """Owns the grid, cutoff, and settings; advances one State."""

    def __init__(self, grid: Grid, cutoff: CutoffProfile, settings: StepperSettings):
        self.grid = grid
        self.cutoff = cutoff
        self.settings = settings
        self._steps_taken = 0
        self._q_warm: np.ndarray | None = None

    def reset_warm_start(self) -> None:
        """Forget pressure history so the trajectory no longer depends on it.

        Called when a snapshot is written: a run resumed from that snapshot
        starts with no warm start, so resetting here keeps the continued and
        resumed trajectories bit-identical.
        """
        self._q_warm = None

    def geometry(self, psi: np.ndarray, v: np.ndarray) -> GeometrySnapshot:
        """Two-stage lift: psi_t is the trace of the stage's own velocity."""
        s = self.settings
        base = lift_surface(psi, None, self.cutoff, self.grid)
        self._check_geometry(base)
        if s.fixed_lid:
            return base
        psi_t = compute_psi_t(v, base)
        return lift_surface(psi, psi_t, self.cutoff, self.grid)

    def _check_geometry(self, geom: GeometrySnapshot) -> None:
        eps = self.settings.eps_geo
        if geom.min_d3phi <= eps:
            raise GeometryDegenerateError(
                f"vertical stretching {geom.min_d3phi:.3e} <= {eps:.1e}",
                quantity="min_d3phi",
                value=float(geom.min_d3phi),
            )
        if geom.depth_margin <= eps:
            raise GeometryDegenerateError(
                f"surface within {geom.depth_margin:.3e} of the bottom",
                quantity="depth_margin",
                value=float(geom.depth_margin),
            )

    def rhs(
        self, psi: np.ndarray, v: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, PressureSolution, GeometrySnapshot]:
        s = self.settings
        geom = self.geometry(psi, v)
        q = solve_pressure_dirichlet(
            v,
            geom,
            s.sigma,
            rtol=s.elliptic_rtol,
            maxiter=s.elliptic_maxiter,
            x0=self._q_warm,
        )
        self._q_warm = q.q
        dv = compute_dt_v(v, geom, q.q)
        if s.fixed_lid:
            dpsi = np.zeros_like(psi)
        else:
            dpsi = geom.psi_t
        return dv, dpsi, q, geom

    def step(self, state: State, dt: float | None = None) -> tuple[State, StepReport]:
        s = self.settings
        g = self.grid
        if dt is None:
            geom0 = self.geometry(state.psi, state.v)
            dt = cfl_dt(state.v, geom0, s.sigma, s.safety)

        k1v, k1p, q1, _ = self.rhs(state.psi, state.v)
        k2v, k2p, q2, _ = self.rhs(state.psi + 0.5 * dt * k1p, state.v + 0.5 * dt * k1v)
        k3v, k3p, q3, _ = self.rhs(state.psi + 0.5 * dt * k2p, state.v + 0.5 * dt * k2v)
        k4v, k4p, q4, _ = self.rhs(state.psi + dt * k3p, state.v + dt * k3v)

        v_new = state.v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        psi_new = state.psi + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)

        self._steps_taken += 1
        geom_new = self.geometry(psi_new, v_new)

        if s.fixed_lid:
            beta = compute_psi_t(v_new, geom_new)
            xi = harmonic_extension(
                beta, geom_new, rtol=s.elliptic_rtol, maxiter=s.elliptic_maxiter
            )
            v_new = v_new - grad_phi(xi, geom_new)

        projected = s.projection_cadence > 0 and (
            self._steps_taken % s.projection_cadence == 0
        )
        if projected:
            v_new, _ = project_divergence_free(
                v_new, geom_new, rtol=s.elliptic_rtol, maxiter=s.elliptic_maxiter
            )

        report = StepReport(
            dt=dt,
            pressure_iterations=q1.iterations + q2.iterations + q3.iterations + q4.iterations,
            pressure_residual=max(q1.residual, q2.residual, q3.residual, q4.residual),
            div_norm=g.l2_volume(div_phi(v_new, geom_new)),
            bottom_flux_norm=g.l2_surface(g.bottom(v_new[2])),
            projected=projected,
        )
        return State(t=state.t + dt, v=v_new, psi=psi_new), report
