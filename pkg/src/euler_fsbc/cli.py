"""Command line front end: run, check, dispersion, report."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import (
    Config,
    ConfigError,
    apply_overrides,
    build_config,
    build_initial_state,
    make_cutoff,
    make_grid,
    validate,
)
from .diagnostics import (
    BreakdownReport,
    ConditionFlag,
    DiagnosticsEngine,
    classify_breakdown,
)
from .dynamics import (
    GeometryDegenerateError,
    State,
    Stepper,
    StepperSettings,
    cfl_dt,
    compute_dt_v,
    compute_psi_t,
    compute_psi_tt,
)
from .elliptic import EllipticSolveError, solve_pressure_dirichlet
from .geometry import CutoffSlopeError, build_cutoff
from .grid import Grid
from .snapshots import (
    SnapshotError,
    read_snapshot,
    read_timeseries,
    write_snapshot,
    write_timeseries,
)
from .verification import measure_dispersion, run_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COND_A = 10
EXIT_COND_B_PRIME = 11
EXIT_COND_C = 12
EXIT_SOLVER = 13


def _load_config(args: argparse.Namespace) -> Config:
    data: dict = {}
    if args.config is not None:
        text = Path(args.config).read_text()
        import yaml

        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("<root>", "config file must hold a mapping")
        data = loaded
    data = apply_overrides(data, args.override or [])
    cfg = build_config(data)
    validate(cfg)
    return cfg


def _forced_cond_c(reason: str, value: float) -> dict:
    flag = ConditionFlag(triggered=True, trend_slope=0.0, triggering_quantity=reason)
    off = ConditionFlag(triggered=False, trend_slope=0.0, triggering_quantity="")
    return {
        "cond_a": asdict(off),
        "cond_b_prime": asdict(off),
        "cond_c": {**asdict(flag), "value": value},
    }


def _report_dict(report: BreakdownReport) -> dict:
    return {
        "cond_a": asdict(report.cond_a),
        "cond_b_prime": asdict(report.cond_b_prime),
        "cond_c": asdict(report.cond_c),
        "thresholds": asdict(report.thresholds),
    }


def _exit_code_for(report: BreakdownReport) -> int:
    # Fixed precedence when several conditions fire on the same record.
    if report.cond_a.triggered:
        return EXIT_COND_A
    if report.cond_b_prime.triggered:
        return EXIT_COND_B_PRIME
    if report.cond_c.triggered:
        return EXIT_COND_C
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = Path(args.output) if args.output else Path(cfg.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)

    sigma = cfg.physics.sigma
    t0 = 0.0
    if cfg.initial_data.snapshot is not None:
        try:
            t0, b, sigma_snap, psi, v = read_snapshot(cfg.initial_data.snapshot)
        except (SnapshotError, OSError) as e:
            print(f"config error: initial_data.snapshot: {e}", file=sys.stderr)
            return EXIT_CONFIG
        nx, ny = psi.shape
        nz = v.shape[3]
        grid = Grid(nx, ny, nz, b)
        if (nx, ny, nz, b) != (cfg.grid.nx, cfg.grid.ny, cfg.grid.nz, cfg.grid.b):
            print(f"note: grid {nx}x{ny}x{nz}, b={b} taken from snapshot")
        if sigma_snap != sigma:
            print(f"note: sigma={sigma_snap} taken from snapshot")
            sigma = sigma_snap
        try:
            cutoff = build_cutoff(
                grid,
                cfg.cutoff.delta0,
                cfg.cutoff.delta1,
                psi0_sup=float(np.max(np.abs(psi))),
            )
        except (CutoffSlopeError, ValueError) as e:
            print(f"config error: cutoff: {e}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        grid = make_grid(cfg)
        cutoff = make_cutoff(cfg, grid)
        psi, v = build_initial_state(cfg, grid, cutoff)

    settings = StepperSettings(
        sigma=sigma,
        safety=cfg.stepping.safety,
        eps_geo=cfg.tolerances.eps_geo,
        elliptic_rtol=cfg.tolerances.elliptic_tol,
        elliptic_maxiter=cfg.tolerances.max_iters,
        projection_cadence=cfg.stepping.projection_cadence,
        fixed_lid=cfg.stepping.fixed_lid,
    )
    stepper = Stepper(grid, cutoff, settings)
    engine = DiagnosticsEngine(
        grid, sigma, k2_accumulator_enabled=cfg.diagnostics.k2_accumulator_enabled
    )
    thresholds = cfg.thresholds()
    state = State(t=t0, v=v, psi=psi)
    zeros2d = np.zeros((grid.nx, grid.ny))

    def record(st: State, div_norm: float | None) -> None:
        geom = stepper.geometry(st.psi, st.v)
        if settings.fixed_lid:
            # The lid never moves: the surface terms vanish identically.
            engine.record(st.t, st.v, geom, zeros2d, zeros2d, div_norm=div_norm)
            return
        psi_t = compute_psi_t(st.v, geom)
        q = solve_pressure_dirichlet(
            st.v, geom, sigma, rtol=settings.elliptic_rtol, maxiter=settings.elliptic_maxiter
        )
        dt_v = compute_dt_v(st.v, geom, q.q)
        psi_tt = compute_psi_tt(st.v, geom, dt_v)
        engine.record(st.t, st.v, geom, psi_t, psi_tt, div_norm=div_norm)

    def finish(code: int, steps: int, extra: dict | None = None) -> int:
        if engine.history:
            write_timeseries(outdir / "timeseries.csv", engine.history)
        write_snapshot(outdir / "final.bin", state.t, grid.b, sigma, state.psi, state.v)
        payload: dict = {
            "exit_code": code,
            "steps": steps,
            "t_final": state.t,
            "records": len(engine.history),
        }
        if extra is not None:
            payload.update(extra)
        elif len(engine.history) >= 3:
            payload.update(_report_dict(classify_breakdown(engine.history, thresholds)))
        (outdir / "breakdown.json").write_text(json.dumps(payload, indent=2) + "\n")
        label = {
            EXIT_OK: "completed",
            EXIT_COND_A: "halted: control norms exceeded (cond-a)",
            EXIT_COND_B_PRIME: "halted: vorticity blowup indicated (cond-b')",
            EXIT_COND_C: "halted: geometry degenerating (cond-c)",
            EXIT_SOLVER: "halted: elliptic solver failure",
        }[code]
        print(f"{label}: steps={steps} t={state.t:.6g} records={len(engine.history)} -> {outdir}")
        return code

    steps_done = 0
    try:
        record(state, None)
    except GeometryDegenerateError as e:
        print(f"geometry degenerate at t={state.t:.6g}: {e}", file=sys.stderr)
        return finish(EXIT_COND_C, 0, extra=_forced_cond_c(e.quantity, e.value))
    except EllipticSolveError as e:
        print(f"elliptic solver failed at t={state.t:.6g}: {e}", file=sys.stderr)
        return finish(EXIT_SOLVER, 0)

    for step in range(1, cfg.stepping.max_steps + 1):
        remaining = cfg.stepping.t_end - state.t
        if remaining <= 1e-12:
            break
        try:
            dt = cfg.stepping.dt
            if dt is None:
                geom_now = stepper.geometry(state.psi, state.v)
                dt = cfl_dt(state.v, geom_now, sigma, settings.safety)
            state, rep = stepper.step(state, dt=min(dt, remaining))
        except GeometryDegenerateError as e:
            print(f"geometry degenerate at t={state.t:.6g}: {e}", file=sys.stderr)
            return finish(EXIT_COND_C, steps_done, extra=_forced_cond_c(e.quantity, e.value))
        except EllipticSolveError as e:
            print(f"elliptic solver failed at t={state.t:.6g}: {e}", file=sys.stderr)
            return finish(EXIT_SOLVER, steps_done)
        steps_done = step

        if cfg.output.snapshot_every and step % cfg.output.snapshot_every == 0:
            write_snapshot(
                outdir / f"snap_{step:06d}.bin", state.t, grid.b, sigma, state.psi, state.v
            )
            stepper.reset_warm_start()

        at_end = state.t >= cfg.stepping.t_end - 1e-12 or step == cfg.stepping.max_steps
        if step % cfg.diagnostics.record_every == 0 or at_end:
            try:
                record(state, rep.div_norm)
            except GeometryDegenerateError as e:
                print(f"geometry degenerate at t={state.t:.6g}: {e}", file=sys.stderr)
                return finish(EXIT_COND_C, steps_done, extra=_forced_cond_c(e.quantity, e.value))
            except EllipticSolveError as e:
                print(f"elliptic solver failed at t={state.t:.6g}: {e}", file=sys.stderr)
                return finish(EXIT_SOLVER, steps_done)
            if len(engine.history) >= 3:
                report = classify_breakdown(engine.history, thresholds)
                if report.any_triggered():
                    return finish(
                        _exit_code_for(report), steps_done, extra=_report_dict(report)
                    )

    return finish(EXIT_OK, steps_done)


def cmd_check(args: argparse.Namespace) -> int:
    try:
        if args.config is not None or args.override:
            _load_config(args)  # surfacing config errors is part of the check
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run_checks(flat_only=args.flat_only, corrupt=args.corrupt)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f"  ({r.detail})" if r.detail else ""
        print(f"{status} {r.name:26s} value={r.value:.6e} bound={r.bound:.1e}{detail}")
        failed += 0 if r.passed else 1
    total = len(results)
    print(f"{total - failed}/{total} checks passed")
    return EXIT_OK if failed == 0 else 1


def cmd_dispersion(args: argparse.Namespace) -> int:
    n, nz, b, sigma, safety = 32, 17, 10.0, 1.0, 0.4
    if args.config is not None or args.override:
        try:
            cfg = _load_config(args)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        n, nz, b = cfg.grid.nx, cfg.grid.nz, cfg.grid.b
        sigma, safety = cfg.physics.sigma, cfg.stepping.safety
    rows = measure_dispersion(
        modes=(1, 2, 3), n=n, nz=nz, b=b, sigma=sigma, t_end=args.t_end, safety=safety
    )
    print(f"{'k':>3s} {'omega_fit':>14s} {'omega_ref':>14s} {'rel_err':>12s} {'fit'}")
    bad = 0
    for r in rows:
        tag = "ok" if r.converged else "NONCONVERGENT"
        print(
            f"{r.k:3d} {r.omega_fit:14.8f} {r.omega_ref:14.8f} {r.rel_err:12.3e} {tag}"
        )
        bad += 0 if r.converged else 1
    return EXIT_OK if bad == 0 else 1


def cmd_report(args: argparse.Namespace) -> int:
    outdir = Path(args.output) if args.output else Path("out")
    ts_path = outdir / "timeseries.csv"
    if not ts_path.exists():
        print(f"error: {ts_path} not found", file=sys.stderr)
        return EXIT_CONFIG
    history = read_timeseries(ts_path)
    print(f"records: {len(history)}  t in [{history[0].t:.6g}, {history[-1].t:.6g}]")
    e0, e1 = history[0].energy, history[-1].energy
    drift = abs(e1 - e0) / max(abs(e0), 1e-300)
    print(f"energy: {e0:.9e} -> {e1:.9e}  (relative drift {drift:.3e})")
    finite = [
        r.energy_identity_residual
        for r in history
        if np.isfinite(r.energy_identity_residual)
    ]
    if finite:
        print(f"energy identity residual: max {max(finite):.3e} over {len(finite)} records")
    print(
        "peaks: "
        f"vort_sup={max(r.vort_sup for r in history):.6g} "
        f"bkm={history[-1].bkm_integral:.6g} "
        f"grad_psi_sup={max(r.grad_psi_sup for r in history):.6g} "
        f"min_d3phi={min(r.min_d3phi for r in history):.6g}"
    )
    if len(history) >= 3:
        rep = classify_breakdown(history, Config().thresholds())
        for name, flag in (
            ("cond-a", rep.cond_a),
            ("cond-b'", rep.cond_b_prime),
            ("cond-c", rep.cond_c),
        ):
            state = "TRIGGERED" if flag.triggered else "quiet"
            extra = f" [{flag.triggering_quantity}]" if flag.triggered else ""
            print(f"{name:8s} {state}  trend_slope={flag.trend_slope:.4f}{extra}")
    bj = outdir / "breakdown.json"
    if bj.exists():
        stored = json.loads(bj.read_text())
        print(f"stored run: exit_code={stored.get('exit_code')} steps={stored.get('steps')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="euler-fsbc",
        description="Pseudo-spectral free-surface incompressible flow with surface tension.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument(
            "--override",
            action="append",
            metavar="KEY=VALUE",
            help="dotted config override, e.g. grid.nx=32 (repeatable)",
        )

    p_run = sub.add_parser("run", help="time-step a configured initial state")
    common(p_run)
    p_run.add_argument("--output", help="output directory (overrides output.directory)")
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("check", help="run the named self-check suite")
    common(p_check)
    p_check.add_argument(
        "--flat-only", action="store_true", help="only the flat-surface checks"
    )
    p_check.add_argument(
        "--corrupt",
        metavar="NAME",
        help="test hook: inject a derivative fault into the named check",
    )
    p_check.set_defaults(fn=cmd_check)

    p_disp = sub.add_parser(
        "dispersion", help="measure standing-wave frequencies against the reference law"
    )
    common(p_disp)
    p_disp.add_argument("--t-end", type=float, default=8.0, help="signal length to fit")
    p_disp.set_defaults(fn=cmd_dispersion)

    p_rep = sub.add_parser("report", help="summarize a finished run directory")
    p_rep.add_argument("--output", help="run directory holding timeseries.csv")
    p_rep.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
