"""Monitored quantities, identity verification, and breakdown classification.

Everything here reads immutable snapshots.  The engine accumulates a record
history (trapezoid accumulators for the vorticity-sup integral and the
surface-velocity Lipschitz integral) and fills the energy-identity residual
retroactively once a five-point time window is available.  Breakdown
classification is trend estimation against configurable thresholds, not a
blow-up proof: the monitored limits live at a continuum time we cannot
reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .elliptic import harmonic_extension
from .geometry import GeometrySnapshot, normal_velocity_trace
from .grid import Grid
from .operators import (
    Alpha,
    advect,
    alinhac_full_remainder,
    advective_commutator_remainder,
    curl_phi,
    div_phi,
    grad_phi,
    good_unknowns,
    tangential_deriv,
    vertical_phi_deriv,
)

CSV_COLUMNS = (
    "t",
    "energy",
    "psi_c3",
    "psi_t_c3",
    "psi_tt_h15",
    "vbar_sup",
    "vbar_lip_integral",
    "psi_t_c2",
    "psi_t_h3",
    "vort_sup",
    "bkm_integral",
    "min_d3phi",
    "depth_margin",
    "grad_psi_sup",
    "div_norm",
    "energy_identity_residual",
)


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    psi_c3: float
    psi_t_c3: float
    psi_tt_h15: float
    vbar_sup: float
    vbar_lip_integral: float
    psi_t_c2: float
    psi_t_h3: float
    vort_sup: float
    bkm_integral: float
    min_d3phi: float
    depth_margin: float
    grad_psi_sup: float
    div_norm: float
    energy_identity_residual: float

    def row(self) -> list[float]:
        return [getattr(self, name) for name in CSV_COLUMNS]

    @property
    def control_norm_boundary(self) -> float:
        """First control group: surface regularity plus its two time slopes."""
        return self.psi_c3 + self.psi_t_c3 + self.psi_tt_h15

    @property
    def control_norm_velocity(self) -> float:
        """Second control group: surface velocity sup plus its Lipschitz integral."""
        return self.vbar_sup + self.vbar_lip_integral


def vorticity(v: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Rotation of the velocity in flattened coordinates."""
    return curl_phi(v, geom)


# ----------------------------------------------------------------------
# record engine


def _deriv_at_center(ts: np.ndarray, ys: np.ndarray) -> float:
    """Derivative at the middle sample of a five-point window.

    Fits the degree-4 interpolating polynomial (exact for possibly
    nonuniform step sequences) around the center time.
    """
    tc = ts[2]
    coef = np.polynomial.polynomial.polyfit(ts - tc, ys, 4)
    return float(coef[1])


class DiagnosticsEngine:
    """Accumulates records along a run; owns the trapezoid integrals."""

    def __init__(self, grid: Grid, sigma: float, k2_accumulator_enabled: bool = True):
        self.grid = grid
        self.sigma = sigma
        self.k2_accumulator_enabled = k2_accumulator_enabled
        self.history: list[DiagnosticsRecord] = []
        self._energy_series: list[float] = []
        self._source_series: list[float] = []
        self._bkm = 0.0
        self._lip = 0.0
        self._last_t: float | None = None
        self._last_vort_sup = 0.0
        self._last_lip_integrand = 0.0

    def _surface_energy(self, geom: GeometrySnapshot) -> float:
        d1, d2 = geom.dpsi
        return self.sigma * self.grid.integrate_surface((d1 * d1 + d2 * d2) / geom.norm_N)

    def _energy_functional(self, v: np.ndarray, geom: GeometrySnapshot) -> float:
        speed2 = v[0] ** 2 + v[1] ** 2 + v[2] ** 2
        return self.grid.integrate_volume(speed2 * geom.d3phi) + self._surface_energy(geom)

    def _energy_source(self, geom: GeometrySnapshot, psi_t: np.ndarray) -> float:
        d1, d2 = geom.dpsi
        g = self.grid
        d1t = g.deriv_tangential(psi_t, 1)
        d2t = g.deriv_tangential(psi_t, 2)
        grad2 = d1 * d1 + d2 * d2
        dt_inv_norm = -(d1 * d1t + d2 * d2t) / geom.norm_N**3
        return self.sigma * g.integrate_surface(dt_inv_norm * grad2)

    def _lip_integrand(self, v: np.ndarray) -> float:
        g = self.grid
        worst = 0.0
        for comp in (g.top(v[0]), g.top(v[1])):
            for axis in (1, 2):
                worst = max(worst, float(np.max(np.abs(g.deriv_tangential(comp, axis)))))
        return worst

    def record(
        self,
        t: float,
        v: np.ndarray,
        geom: GeometrySnapshot,
        psi_t: np.ndarray,
        psi_tt: np.ndarray,
        div_norm: float | None = None,
    ) -> DiagnosticsRecord:
        g = self.grid
        sigma = self.sigma

        energy = sum(g.interior_sobolev_norm(v[i], 3) ** 2 for i in range(3))
        energy += sigma * g.boundary_sobolev_norm(geom.psi, 4) ** 2

        vort = vorticity(v, geom)
        vort_sup = max(g.sup_volume(vort[i]) for i in range(3))

        vbar_top = np.sqrt(g.top(v[0]) ** 2 + g.top(v[1]) ** 2)
        vbar_sup = float(np.max(vbar_top))
        lip_now = self._lip_integrand(v) if self.k2_accumulator_enabled else 0.0

        if self._last_t is not None:
            dt = t - self._last_t
            self._bkm += 0.5 * dt * (self._last_vort_sup + vort_sup)
            self._lip += 0.5 * dt * (self._last_lip_integrand + lip_now)
        self._last_t = t
        self._last_vort_sup = vort_sup
        self._last_lip_integrand = lip_now

        if div_norm is None:
            div_norm = g.l2_volume(div_phi(v, geom))

        rec = DiagnosticsRecord(
            t=t,
            energy=energy,
            psi_c3=g.holder_and_sup_norms(geom.psi, 3).total,
            psi_t_c3=g.holder_and_sup_norms(psi_t, 3).total,
            psi_tt_h15=g.boundary_sobolev_norm(psi_tt, 1.5),
            vbar_sup=vbar_sup,
            vbar_lip_integral=self._lip,
            psi_t_c2=g.holder_and_sup_norms(psi_t, 2).total,
            psi_t_h3=g.boundary_sobolev_norm(psi_t, 3.0),
            vort_sup=vort_sup,
            bkm_integral=self._bkm,
            min_d3phi=float(geom.min_d3phi),
            depth_margin=float(geom.depth_margin),
            grad_psi_sup=float(geom.grad_psi_sup),
            div_norm=float(div_norm),
            energy_identity_residual=math.nan,
        )
        self.history.append(rec)
        self._energy_series.append(self._energy_functional(v, geom))
        self._source_series.append(self._energy_source(geom, psi_t))
        self._fill_energy_residual()
        return rec

    def _fill_energy_residual(self) -> None:
        n = len(self.history)
        if n < 5:
            return
        i = n - 3
        ts = np.array([r.t for r in self.history[i - 2 : i + 3]])
        ys = np.array(self._energy_series[i - 2 : i + 3])
        dA = _deriv_at_center(ts, ys)
        scale = max(max(abs(a) for a in self._energy_series), 1e-30)
        self.history[i].energy_identity_residual = abs(dA - self._source_series[i]) / scale


# ----------------------------------------------------------------------
# breakdown classification


@dataclass(frozen=True)
class ConditionFlag:
    triggered: bool
    trend_slope: float
    triggering_quantity: str


@dataclass(frozen=True)
class BreakdownThresholds:
    control_norm_max: float = 100.0
    bkm_max: float = 50.0
    bkm_slope_min: float = 0.5
    eps_geo: float = 1e-6
    turning_threshold: float = 10.0
    window: int = 8


@dataclass(frozen=True)
class BreakdownReport:
    cond_a: ConditionFlag
    cond_b_prime: ConditionFlag
    cond_c: ConditionFlag
    thresholds: BreakdownThresholds

    def any_triggered(self) -> bool:
        return self.cond_a.triggered or self.cond_b_prime.triggered or self.cond_c.triggered


def _window(history: list[DiagnosticsRecord], size: int) -> list[DiagnosticsRecord]:
    return history[-min(size, len(history)) :]


def _ls_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares line fit (slope, intercept) without conditioning noise."""
    xm = x - x.mean()
    var = float(xm @ xm)
    if var == 0.0:
        return 0.0, float(y.mean())
    slope = float(xm @ (y - y.mean())) / var
    return slope, float(y.mean() - slope * x.mean())


def _log_slope(ts: np.ndarray, ys: np.ndarray) -> float:
    """Least-squares slope of log(y) against t; 0 for degenerate data."""
    good = ys > 0.0
    if np.count_nonzero(good) < 2:
        return 0.0
    t, y = ts[good], np.log(ys[good])
    if np.ptp(t) == 0.0:
        return 0.0
    return _ls_line(t, y)[0]


def classify_breakdown(
    history: list[DiagnosticsRecord], thresholds: BreakdownThresholds
) -> BreakdownReport:
    if len(history) < 3:
        raise ValueError("need at least 3 records to classify trends")
    win = _window(history, thresholds.window)
    ts = np.array([r.t for r in win])
    last = history[-1]

    # (a) control-norm blow-up
    control = np.array([r.control_norm_boundary + r.control_norm_velocity for r in win])
    cond_a = ConditionFlag(
        triggered=bool(control[-1] >= thresholds.control_norm_max),
        trend_slope=_log_slope(ts, control),
        triggering_quantity="control_norm",
    )

    # (b') vorticity-sup time integral divergence
    vort = np.array([r.vort_sup for r in win])
    bkm = np.array([r.bkm_integral for r in win])
    slope_div = 0.0
    blowup_time = math.inf
    if np.all(vort > 0.0) and np.ptp(ts) > 0.0:
        # 1/vort linear in t signals vort ~ c/(T-t); the root estimates T.
        m, c0 = _ls_line(ts, 1.0 / vort)
        if m < 0.0:
            root = -c0 / m
            if root > ts[-1]:
                blowup_time = root
                x = -np.log(blowup_time - ts)
                if np.ptp(x) > 1e-12:
                    slope_div, _ = _ls_line(x, bkm)
    cond_b = ConditionFlag(
        triggered=bool(
            last.bkm_integral >= thresholds.bkm_max
            or (math.isfinite(blowup_time) and slope_div >= thresholds.bkm_slope_min)
        ),
        trend_slope=slope_div,
        triggering_quantity="bkm_integral",
    )

    # (c) geometry degeneration / bottom contact / turning proxy
    c_triggers = [
        (last.min_d3phi <= thresholds.eps_geo, "min_d3phi"),
        (last.depth_margin <= thresholds.eps_geo, "depth_margin"),
        (last.grad_psi_sup >= thresholds.turning_threshold, "grad_psi_sup"),
    ]
    hit = next((name for ok, name in c_triggers if ok), "min_d3phi")
    cond_c = ConditionFlag(
        triggered=any(ok for ok, _ in c_triggers),
        trend_slope=_log_slope(ts, np.array([r.min_d3phi for r in win])),
        triggering_quantity=hit,
    )
    return BreakdownReport(cond_a=cond_a, cond_b_prime=cond_b, cond_c=cond_c, thresholds=thresholds)


# ----------------------------------------------------------------------
# inequality spot checks (ratios reported, never asserted against constants)


@dataclass(frozen=True)
class RatioRecord:
    lhs: float
    rhs: float
    ratio: float


def ferrari_check(
    v: np.ndarray,
    geom: GeometrySnapshot,
    rtol: float = 1e-10,
    maxiter: int = 500,
) -> RatioRecord:
    """Log-interpolation bound for the tangent-corrected velocity.

    The corrected field removes the gradient of the harmonic extension of
    the top normal trace, making the field tangent to both boundaries; its
    W^{1,inf} size is compared against the vorticity in sup and H^2 norms.
    The constant in the continuum inequality is unknown, so only the ratio
    is reported.
    """
    g = geom.grid
    beta = normal_velocity_trace(v, geom)
    xi = harmonic_extension(beta, geom, rtol=rtol, maxiter=maxiter)
    V = v - grad_phi(xi, geom)

    lhs = max(g.sup_volume(V[i]) for i in range(3))
    for i in range(3):
        dVi = grad_phi(V[i], geom)
        lhs = max(lhs, max(g.sup_volume(dVi[j]) for j in range(3)))

    w = vorticity(v, geom)
    w_sup = max(g.sup_volume(w[i]) for i in range(3))
    w_h2 = math.sqrt(sum(g.interior_sobolev_norm(w[i], 2) ** 2 for i in range(3)))
    rhs = (1.0 + max(0.0, math.log(max(w_h2, 1e-300)))) * w_sup + 1.0
    return RatioRecord(lhs=lhs, rhs=rhs, ratio=lhs / rhs)


def hodge_check(
    X: np.ndarray, geom: GeometrySnapshot, variant: str = "interior"
) -> RatioRecord:
    """Div-curl control of a Sobolev norm; `interior` uses pure tangential
    derivatives at order 3, `boundary` the normal trace at order 2 and
    requires bottom tangency."""
    g = geom.grid
    d = div_phi(X, geom)
    c = curl_phi(X, geom)
    low2 = sum(g.l2_volume(X[i]) ** 2 for i in range(3))

    if variant == "interior":
        s = 3
        lhs = sum(g.interior_sobolev_norm(X[i], s) ** 2 for i in range(3))
        tang = 0.0
        for i in range(3):
            for a1 in range(s + 1):
                tang += g.l2_volume(tangential_deriv(X[i], (a1, s - a1), g)) ** 2
        rhs = (
            sum(g.interior_sobolev_norm(d if j == 0 else c[j - 1], s - 1) ** 2 for j in range(4))
            + tang
            + low2
        )
    elif variant == "boundary":
        s = 2
        bottom_flux = g.l2_surface(g.bottom(X[2]))
        scale = math.sqrt(low2) + 1e-30
        if bottom_flux > 1e-8 * scale:
            raise ValueError("boundary variant requires bottom tangency of X")
        lhs = sum(g.interior_sobolev_norm(X[i], s) ** 2 for i in range(3))
        trace = normal_velocity_trace(X, geom)
        rhs = (
            sum(g.interior_sobolev_norm(d if j == 0 else c[j - 1], s - 1) ** 2 for j in range(4))
            + g.boundary_sobolev_norm(trace, s - 0.5) ** 2
            + low2
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return RatioRecord(lhs=lhs, rhs=rhs, ratio=lhs / max(rhs, 1e-300))


# ----------------------------------------------------------------------
# transport identity suite


@dataclass(frozen=True)
class IdentityResidual:
    name: str
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative(self) -> float:
        return self.residual / max(abs(self.lhs), abs(self.rhs), 1e-30)


def _dt_weighted_volume(f: np.ndarray, g_: np.ndarray, dt_f, dt_g, geom) -> float:
    """Instantaneous time derivative of the stretched volume pairing."""
    g = geom.grid
    chi_p = geom.cutoff.chi_p[None, None, :]
    dt_p = chi_p * geom.psi_t[:, :, None]
    return g.integrate_volume((dt_f * g_ + f * dt_g) * geom.d3phi + f * g_ * dt_p)


def _partial_t_phi(f_t: np.ndarray, f: np.ndarray, geom) -> np.ndarray:
    """Time derivative seen through the moving lift: dt minus lift drift."""
    fz = geom.grid.deriv_vertical(f)
    return f_t - geom.dtphi * geom.inv_d3phi * fz


def transport_identity_suite(
    f: np.ndarray,
    g_: np.ndarray,
    v: np.ndarray,
    geom: GeometrySnapshot,
    dt_f: np.ndarray,
    dt_g: np.ndarray,
    pre_tol: float = 1e-6,
) -> dict[str, IdentityResidual]:
    """Evaluate the four stretched-domain transport/integration identities.

    The caller supplies consistent instantaneous time derivatives of f, g
    (and of the surface, inside geom).  Identities using the flow require
    div-free v, bottom tangency, and the kinematic surface condition; these
    preconditions are checked and violations rejected.
    """
    g = geom.grid
    out: dict[str, IdentityResidual] = {}

    p = geom.d3phi
    fz = g.deriv_vertical(f)
    gz = g.deriv_vertical(g_)

    # pairing with the time slope of the stretched measure
    lhs = _dt_weighted_volume(f, g_, dt_f, dt_g, geom)
    ptf = _partial_t_phi(dt_f, f, geom)
    ptg = _partial_t_phi(dt_g, g_, geom)
    rhs = g.integrate_volume((ptf * g_ + f * ptg) * p)
    rhs += g.integrate_surface(g.top(f) * g.top(g_) * geom.psi_t)
    out["eq-A1"] = IdentityResidual("eq-A1", lhs, rhs)

    # tangential integration by parts picking up the surface normal
    normal = geom.surface_normal()
    for i in (1, 2):
        r_i = geom.r1 if i == 1 else geom.r2
        di_f = g.deriv_tangential(f, i) - r_i * fz
        di_g = g.deriv_tangential(g_, i) - r_i * gz
        lhs = g.integrate_volume(di_f * g_ * p)
        rhs = -g.integrate_volume(f * di_g * p)
        rhs += g.integrate_surface(g.top(f) * g.top(g_) * normal[i - 1])
        out[f"eq-A2-i{i}"] = IdentityResidual(f"eq-A2-i{i}", lhs, rhs)

    # vertical integration by parts (needs g vanishing at the bottom)
    g_btm_sup = float(np.max(np.abs(g.bottom(g_))))
    g_scale = float(np.max(np.abs(g_))) + 1e-30
    if g_btm_sup <= pre_tol * g_scale:
        d3f = geom.inv_d3phi * fz
        d3g = geom.inv_d3phi * gz
        lhs = g.integrate_volume(d3f * g_ * p)
        rhs = -g.integrate_volume(f * d3g * p)
        rhs += g.integrate_surface(g.top(f) * g.top(g_))
        out["eq-A2-1"] = IdentityResidual("eq-A2-1", lhs, rhs)

    # flow-transport identities need a consistent flow
    div_norm = g.l2_volume(div_phi(v, geom))
    v_scale = max(g.sup_volume(v[i]) for i in range(3)) + 1e-30
    kin_gap = g.l2_surface(geom.psi_t - normal_velocity_trace(v, geom))
    btm_flux = float(np.max(np.abs(g.bottom(v[2]))))
    flow_ok = (
        div_norm <= pre_tol * v_scale
        and kin_gap <= pre_tol * max(v_scale, 1.0)
        and btm_flux <= pre_tol * v_scale
    )
    if flow_ok:
        w = advection_speed_raw(v, geom)
        for name, a, da in (("eq-A3", f, dt_f), ("eq-A4-g", g_, dt_g)):
            az = g.deriv_vertical(a)
            mat = (
                da
                + v[0] * g.deriv_tangential(a, 1)
                + v[1] * g.deriv_tangential(a, 2)
                + w * az
            )
            lhs = 0.5 * _dt_weighted_volume(a, a, da, da, geom)
            rhs = g.integrate_volume(mat * a * p)
            out[name] = IdentityResidual(name, lhs, rhs)
        fz_mat = (
            dt_f
            + v[0] * g.deriv_tangential(f, 1)
            + v[1] * g.deriv_tangential(f, 2)
            + w * fz
        )
        gz_mat = (
            dt_g
            + v[0] * g.deriv_tangential(g_, 1)
            + v[1] * g.deriv_tangential(g_, 2)
            + w * gz
        )
        lhs = _dt_weighted_volume(f, g_, dt_f, dt_g, geom)
        rhs = g.integrate_volume((fz_mat * g_ + f * gz_mat) * p)
        out["eq-A4"] = IdentityResidual("eq-A4", lhs, rhs)
    return out


def advection_speed_raw(v: np.ndarray, geom: GeometrySnapshot) -> np.ndarray:
    """Vertical transport speed without the product filter (quadrature use)."""
    flux = (
        -geom.d1phi * v[0] - geom.d2phi * v[1] + v[2] - geom.dtphi
    )
    return geom.inv_d3phi * flux


def require_flow_preconditions(
    f: np.ndarray | None,
    g_: np.ndarray | None,
    v: np.ndarray,
    geom: GeometrySnapshot,
    pre_tol: float = 1e-6,
) -> None:
    """Raise if the flow fails the tangency/incompressibility preconditions."""
    g = geom.grid
    v_scale = max(g.sup_volume(v[i]) for i in range(3)) + 1e-30
    if g.l2_volume(div_phi(v, geom)) > pre_tol * v_scale:
        raise ValueError("flow is not divergence-free within tolerance")
    if g.l2_surface(geom.psi_t - normal_velocity_trace(v, geom)) > pre_tol * max(v_scale, 1.0):
        raise ValueError("kinematic surface condition violated")
    if float(np.max(np.abs(g.bottom(v[2])))) > pre_tol * v_scale:
        raise ValueError("flow crosses the bottom boundary")


# ----------------------------------------------------------------------
# trace identity and good-unknown evolution


def trace_identity_residual(v: np.ndarray, geom: GeometrySnapshot) -> float:
    """Surface misfit of the vertical-derivative trace identity.

    For a divergence-free field the vertical derivative dotted with the
    surface normal must equal minus the tangential divergence of the
    horizontal trace; both sides are evaluated with the same discrete
    products used by the volume divergence.
    """
    g = geom.grid
    d1p_t, d2p_t = g.top(geom.d1phi), g.top(geom.d2phi)
    dzv = [g.top(g.deriv_vertical(v[i])) for i in range(3)]
    lhs = -g.pmul(dzv[0], d1p_t) - g.pmul(dzv[1], d2p_t) + dzv[2]
    rhs = -(g.deriv_tangential(g.top(v[0]), 1) + g.deriv_tangential(g.top(v[1]), 2))
    return g.l2_surface(lhs - rhs)


def good_unknown_evolution_residual(
    snapshots: list[tuple[np.ndarray, np.ndarray, GeometrySnapshot]],
    alpha: Alpha,
    dt: float,
) -> float:
    """Volume residual of the corrected-unknown momentum balance.

    `snapshots` holds three consecutive (v, q, geom) triples at uniform
    spacing `dt`; time derivatives are centered at the middle snapshot,
    every spatial term is evaluated there.  On a smooth solve the result
    shrinks at second order in dt until the spatial commutator floor.
    """
    if len(snapshots) != 3:
        raise ValueError("need exactly 3 consecutive snapshots")
    (v0, _, ge0), (v1, q1, ge1), (v2, _, ge2) = snapshots
    g = ge1.grid
    va, _ = good_unknowns(v0, q1, ge0, alpha)
    vb, qb = good_unknowns(v1, q1, ge1, alpha)
    vc, _ = good_unknowns(v2, q1, ge2, alpha)
    t_phi = tangential_deriv(ge1.phi, alpha, g)
    grad_q = grad_phi(qb, ge1)
    total = 0.0
    for i in range(3):
        dt_big = (vc[i] - va[i]) / (2.0 * dt)
        adv_big = advect(v1, vb[i], ge1)
        h0 = vertical_phi_deriv(v0[i], ge0)
        h1 = vertical_phi_deriv(v1[i], ge1)
        h2 = vertical_phi_deriv(v2[i], ge2)
        dt_h = (h2 - h0) / (2.0 * dt) + advect(v1, h1, ge1)
        r_time = advective_commutator_remainder(v1[i], v1, ge1, alpha)
        r_space = alinhac_full_remainder(q1, ge1, alpha, i + 1)
        res = dt_big + adv_big + g.pmul(dt_h, t_phi) + r_time + grad_q[i] + r_space
        total += g.l2_volume(res) ** 2
    return math.sqrt(total)

