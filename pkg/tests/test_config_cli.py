"""Configuration validation, snapshot formats, and the command line front end."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from euler_fsbc.config import (
    ConfigError,
    apply_overrides,
    build_config,
    psi0_sup_estimate,
)
from euler_fsbc.diagnostics import DiagnosticsRecord
from euler_fsbc.snapshots import (
    SnapshotError,
    read_snapshot,
    read_timeseries,
    write_snapshot,
    write_timeseries,
)


# ----------------------------------------------------------------------
# configuration


def test_defaults_build_and_validate():
    cfg = build_config({})
    assert cfg.grid.nx == 16
    assert cfg.physics.sigma == 1.0
    th = cfg.thresholds()
    assert th.eps_geo == cfg.tolerances.eps_geo
    assert th.window == cfg.diagnostics.window


def test_zero_tension_is_rejected():
    with pytest.raises(ConfigError, match="physics.sigma"):
        build_config({"physics": {"sigma": 0.0}})


def test_tiny_vertical_grid_is_rejected():
    with pytest.raises(ConfigError, match="grid.nz"):
        build_config({"grid": {"nz": 3}})


def test_unknown_section_names_the_offender():
    with pytest.raises(ConfigError, match="gird"):
        build_config({"gird": {"nx": 16}})


def test_unknown_key_names_the_offender():
    with pytest.raises(ConfigError, match="stepping.step_size"):
        build_config({"stepping": {"step_size": 0.1}})


def test_surface_amplitude_reaching_bottom_is_rejected():
    data = {
        "grid": {"b": 2.0},
        "initial_data": {"psi0": {"family": "single_mode", "eps": 2.5}},
    }
    with pytest.raises(ConfigError, match="initial_data.psi0"):
        build_config(data)


def test_too_narrow_cutoff_band_is_rejected():
    # on b=3 the default band [0.5, 2.0] is too steep for any surface
    with pytest.raises(ConfigError, match="cutoff"):
        build_config({"grid": {"b": 3.0}})


def test_unknown_velocity_family_is_rejected():
    data = {"initial_data": {"v0": {"family": "jets"}}}
    with pytest.raises(ConfigError, match="v0.family"):
        build_config(data)


def test_nonpositive_explicit_step_is_rejected():
    with pytest.raises(ConfigError, match="stepping.dt"):
        build_config({"stepping": {"dt": -0.1}})


def test_overrides_parse_as_yaml_scalars():
    data = apply_overrides(
        {"grid": {"nx": 16}},
        ["grid.nx=32", "physics.sigma=2.5", "stepping.fixed_lid=true"],
    )
    assert data["grid"]["nx"] == 32
    assert data["physics"]["sigma"] == 2.5
    assert data["stepping"]["fixed_lid"] is True


def test_malformed_override_is_rejected():
    with pytest.raises(ConfigError, match="override"):
        apply_overrides({}, ["grid.nx:32"])


def test_psi0_sup_estimate_per_family():
    flat = build_config({})
    assert psi0_sup_estimate(flat) == 0.0
    wavy = build_config(
        {"initial_data": {"psi0": {"family": "single_mode", "eps": -0.02}}}
    )
    assert psi0_sup_estimate(wavy) == 0.02


# ----------------------------------------------------------------------
# snapshots and time series


def test_snapshot_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(5)
    psi = rng.normal(size=(8, 6))
    v = rng.normal(size=(3, 8, 6, 5))
    p = tmp_path / "s.bin"
    write_snapshot(p, t=0.375, b=2.5, sigma=1.25, psi=psi, v=v)
    t, b, sigma, psi2, v2 = read_snapshot(p)
    assert (t, b, sigma) == (0.375, 2.5, 1.25)
    assert np.array_equal(psi, psi2)
    assert np.array_equal(v, v2)


def test_snapshot_rejects_bad_magic(tmp_path):
    p = tmp_path / "s.bin"
    write_snapshot(p, 0.0, 2.0, 1.0, np.zeros((4, 4)), np.zeros((3, 4, 4, 5)))
    raw = bytearray(p.read_bytes())
    raw[:8] = b"NOTASNAP"
    p.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(p)


def test_snapshot_rejects_unknown_version(tmp_path):
    p = tmp_path / "s.bin"
    write_snapshot(p, 0.0, 2.0, 1.0, np.zeros((4, 4)), np.zeros((3, 4, 4, 5)))
    raw = bytearray(p.read_bytes())
    raw[8:12] = (99).to_bytes(4, "little")
    p.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="version"):
        read_snapshot(p)


def test_snapshot_rejects_truncated_payload(tmp_path):
    p = tmp_path / "s.bin"
    write_snapshot(p, 0.0, 2.0, 1.0, np.zeros((4, 4)), np.zeros((3, 4, 4, 5)))
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(SnapshotError):
        read_snapshot(p)


def test_snapshot_rejects_mismatched_shapes(tmp_path):
    with pytest.raises(SnapshotError, match="shape"):
        write_snapshot(
            tmp_path / "s.bin", 0.0, 2.0, 1.0, np.zeros((4, 4)), np.zeros((3, 4, 5, 5))
        )


def test_timeseries_round_trip_preserves_every_bit(tmp_path):
    rng = np.random.default_rng(11)
    recs = []
    for i in range(4):
        vals = list(rng.normal(size=16))
        vals[0] = 0.1 * i
        if i < 2:
            vals[-1] = math.nan  # unfilled residual slots
        recs.append(DiagnosticsRecord(*vals))
    p = tmp_path / "ts.csv"
    write_timeseries(p, recs)
    back = read_timeseries(p)
    assert len(back) == 4
    for a, b in zip(recs, back):
        for x, y in zip(a.row(), b.row()):
            assert (math.isnan(x) and math.isnan(y)) or x == y


def test_timeseries_rejects_foreign_header(tmp_path):
    p = tmp_path / "ts.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SnapshotError, match="header"):
        read_timeseries(p)


# ----------------------------------------------------------------------
# command line


def _cli(*argv, env_extra=None):
    env = dict(os.environ)
    env.setdefault("EULER_FSBC_THREADS", "2")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "euler_fsbc.cli", *argv],
        capture_output=True,
        text=True,
        env=env,
    )


RUN_YAML = """\
grid: {{nx: 8, ny: 8, nz: 9, b: 4.0}}
physics: {{sigma: 1.0}}
initial_data:
  psi0: {{family: single_mode, eps: 0.001}}
stepping: {{t_end: 0.02, dt: 0.01, max_steps: 10}}
{extra}
"""


def test_run_produces_outputs_and_clean_exit(tmp_path):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text(RUN_YAML.format(extra=""))
    out = tmp_path / "out"
    r = _cli("run", "--config", str(cfgp), "--output", str(out))
    assert r.returncode == 0, r.stderr
    assert (out / "timeseries.csv").exists()
    assert (out / "final.bin").exists()
    payload = json.loads((out / "breakdown.json").read_text())
    assert payload["exit_code"] == 0
    assert payload["steps"] == 2
    t, b, sigma, psi, v = read_snapshot(out / "final.bin")
    assert t == pytest.approx(0.02, abs=1e-15)
    history = read_timeseries(out / "timeseries.csv")
    assert len(history) == payload["records"] == 3


def test_run_rejects_zero_tension_with_config_exit(tmp_path):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text(RUN_YAML.format(extra=""))
    r = _cli(
        "run", "--config", str(cfgp), "--override", "physics.sigma=0.0",
        "--output", str(tmp_path / "out"),
    )
    assert r.returncode == 2
    assert "physics.sigma" in r.stderr


def test_run_halts_on_control_norm_threshold(tmp_path):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text(RUN_YAML.format(extra=""))
    out = tmp_path / "out"
    r = _cli(
        "run", "--config", str(cfgp),
        "--override", "diagnostics.control_norm_max=1e-12",
        "--output", str(out),
    )
    assert r.returncode == 10, r.stdout + r.stderr
    payload = json.loads((out / "breakdown.json").read_text())
    assert payload["cond_a"]["triggered"] is True


def test_run_halts_when_geometry_floor_is_crossed(tmp_path):
    # eps_geo above the actual vertical stretch forces the geometry halt
    # on the very first record, before any step is taken
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text(RUN_YAML.format(extra=""))
    out = tmp_path / "out"
    r = _cli(
        "run", "--config", str(cfgp),
        "--override", "initial_data.psi0.eps=0.01",
        "--override", "tolerances.eps_geo=0.999",
        "--output", str(out),
    )
    assert r.returncode == 12, r.stdout + r.stderr
    payload = json.loads((out / "breakdown.json").read_text())
    assert payload["cond_c"]["triggered"] is True
    assert payload["cond_c"]["triggering_quantity"] == "min_d3phi"
    assert payload["steps"] == 0


def test_check_flat_suite_passes():
    r = _cli("check", "--flat-only")
    assert r.returncode == 0, r.stdout + r.stderr
    assert "checks passed" in r.stdout


def test_check_reports_injected_fault():
    r = _cli("check", "--flat-only", "--corrupt", "flat-metric-reduction")
    assert r.returncode == 1
    assert "FAIL flat-metric-reduction" in r.stdout


def test_check_rejects_unknown_fault_name():
    r = _cli("check", "--flat-only", "--corrupt", "no-such-check")
    assert r.returncode == 2
    assert "unknown check" in r.stderr


def test_report_summarizes_run_directory(tmp_path):
    cfgp = tmp_path / "run.yaml"
    cfgp.write_text(RUN_YAML.format(extra=""))
    out = tmp_path / "out"
    r = _cli("run", "--config", str(cfgp), "--output", str(out))
    assert r.returncode == 0, r.stderr
    rep = _cli("report", "--output", str(out))
    assert rep.returncode == 0, rep.stderr
    assert "records: 3" in rep.stdout
    assert "energy:" in rep.stdout
    assert "cond-a" in rep.stdout


def test_report_missing_directory_is_config_error(tmp_path):
    r = _cli("report", "--output", str(tmp_path / "nowhere"))
    assert r.returncode == 2
    assert "not found" in r.stderr
