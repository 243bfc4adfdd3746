"""Run configuration: YAML parsing, dotted overrides, validation."""

from __future__ import annotations

import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .diagnostics import BreakdownThresholds
from .geometry import CutoffProfile, CutoffSlopeError, build_cutoff
from .grid import Grid
from . import initial_data


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class GridConfig:
    nx: int = 16
    ny: int = 16
    nz: int = 16
    b: float = 4.0


@dataclass
class PhysicsConfig:
    sigma: float = 1.0


@dataclass
class CutoffConfig:
    delta0: float | None = None
    delta1: float | None = None


@dataclass
class InitialDataConfig:
    # psi0/v0 are family specs: {"family": name, **params}.  A snapshot path
    # replaces both and resumes an earlier run.
    psi0: dict = field(default_factory=lambda: {"family": "flat"})
    v0: dict = field(default_factory=lambda: {"family": "rest"})
    snapshot: str | None = None


@dataclass
class SteppingConfig:
    safety: float = 0.4
    t_end: float = 1.0
    max_steps: int = 1000
    projection_cadence: int = 1
    fixed_lid: bool = False
    dt: float | None = None  # explicit step overrides the CFL choice


@dataclass
class TolerancesConfig:
    elliptic_tol: float = 1e-10
    max_iters: int = 500
    eps_geo: float = 1e-6


@dataclass
class DiagnosticsConfig:
    record_every: int = 1
    k2_accumulator_enabled: bool = True
    turning_threshold: float = 10.0
    control_norm_max: float = 100.0
    bkm_max: float = 50.0
    bkm_slope_min: float = 0.5
    window: int = 8


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 0  # 0: final snapshot only


@dataclass
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    cutoff: CutoffConfig = field(default_factory=CutoffConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    stepping: SteppingConfig = field(default_factory=SteppingConfig)
    tolerances: TolerancesConfig = field(default_factory=TolerancesConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def thresholds(self) -> BreakdownThresholds:
        d = self.diagnostics
        return BreakdownThresholds(
            control_norm_max=d.control_norm_max,
            bkm_max=d.bkm_max,
            bkm_slope_min=d.bkm_slope_min,
            eps_geo=self.tolerances.eps_geo,
            turning_threshold=d.turning_threshold,
            window=d.window,
        )


_SECTIONS = {
    "grid": GridConfig,
    "physics": PhysicsConfig,
    "cutoff": CutoffConfig,
    "initial_data": InitialDataConfig,
    "stepping": SteppingConfig,
    "tolerances": TolerancesConfig,
    "diagnostics": DiagnosticsConfig,
    "output": OutputConfig,
}


def _coerce(section: str, key: str, anno, value):
    """Nudge a YAML scalar into the annotated field type.

    YAML reads `1e-12` (no decimal point) as a string; without coercion that
    string would sit in a float field until a comparison blows up at runtime.
    """
    args = typing.get_args(anno)
    if args:  # optional fields: unwrap X | None
        if value is None and type(None) in args:
            return None
        non_none = [a for a in args if a is not type(None)]
        if len(non_none) == 1:
            anno = non_none[0]
    if anno is float:
        if not isinstance(value, bool) and isinstance(value, (int, float, str)):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}")
    if anno is int:
        if not isinstance(value, bool):
            if isinstance(value, int):
                return value
            if isinstance(value, str):
                try:
                    return int(value)
                except ValueError:
                    pass
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {value!r}")
    if anno is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{section}.{key}", f"expected true or false, got {value!r}")
    if anno is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{section}.{key}", f"expected a string, got {value!r}")
    if anno is dict:
        if isinstance(value, dict):
            return value
        raise ConfigError(f"{section}.{key}", f"expected a mapping, got {value!r}")
    return value


def build_config(data: dict) -> Config:
    """Assemble a Config from a nested mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    cfg = Config()
    for section, payload in data.items():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        if payload is None:
            continue
        if not isinstance(payload, dict):
            raise ConfigError(section, "section must be a mapping")
        target = getattr(cfg, section)
        hints = typing.get_type_hints(type(target))
        for key, value in payload.items():
            if not hasattr(target, key):
                raise ConfigError(f"{section}.{key}", "unknown key")
            setattr(target, key, _coerce(section, key, hints[key], value))
    validate(cfg)
    return cfg


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply KEY=VALUE overrides with dotted paths; values parse as YAML."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "override path crosses a non-mapping")
        node[keys[-1]] = yaml.safe_load(raw)
    return data


def parse_config(path: str | Path) -> Config:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"not parseable as YAML: {e}") from e
    return build_config(data)


def psi0_sup_estimate(cfg: Config) -> float:
    """A-priori bound on |psi0| from the family parameters."""
    spec = cfg.initial_data.psi0
    fam = spec.get("family", "flat")
    if fam == "flat":
        return 0.0
    if fam == "single_mode":
        return abs(float(spec.get("eps", 1e-4)))
    raise ConfigError("initial_data.psi0.family", f"unknown family {fam!r}")


def validate(cfg: Config) -> None:
    g = cfg.grid
    for key in ("nx", "ny", "nz"):
        n = getattr(g, key)
        if not isinstance(n, int) or n < 4:
            raise ConfigError(f"grid.{key}", "needs an integer >= 4")
    if g.b <= 0:
        raise ConfigError("grid.b", "depth must be positive")
    if cfg.physics.sigma <= 0:
        raise ConfigError(
            "physics.sigma",
            "the model requires positive surface tension; zero-sigma flow is outside scope",
        )
    for key in ("elliptic_tol", "eps_geo"):
        if getattr(cfg.tolerances, key) <= 0:
            raise ConfigError(f"tolerances.{key}", "must be positive")
    if cfg.tolerances.max_iters < 1:
        raise ConfigError("tolerances.max_iters", "must be >= 1")
    st = cfg.stepping
    if st.safety <= 0 or st.safety > 1:
        raise ConfigError("stepping.safety", "needs 0 < safety <= 1")
    if st.max_steps < 0:
        raise ConfigError("stepping.max_steps", "must be >= 0")
    if st.projection_cadence < 0:
        raise ConfigError("stepping.projection_cadence", "must be >= 0 (0 disables)")
    if st.dt is not None and st.dt <= 0:
        raise ConfigError("stepping.dt", "explicit step must be positive")
    if cfg.diagnostics.record_every < 1:
        raise ConfigError("diagnostics.record_every", "must be >= 1")
    if cfg.output.snapshot_every < 0:
        raise ConfigError("output.snapshot_every", "must be >= 0")

    if cfg.initial_data.snapshot is None:
        sup = psi0_sup_estimate(cfg)
        if sup >= g.b:
            raise ConfigError(
                "initial_data.psi0", f"surface amplitude {sup} reaches the bottom depth {g.b}"
            )
        # admissibility of the cutoff for this surface amplitude
        try:
            grid = Grid(g.nx, g.ny, g.nz, g.b)
            build_cutoff(grid, cfg.cutoff.delta0, cfg.cutoff.delta1, psi0_sup=sup)
        except CutoffSlopeError as e:
            raise ConfigError("cutoff.delta0/delta1", str(e)) from e
        except ValueError as e:
            raise ConfigError("cutoff", str(e)) from e
        vfam = cfg.initial_data.v0.get("family", "rest")
        if vfam not in ("rest", "random_solenoidal", "columnar_vortex"):
            raise ConfigError("initial_data.v0.family", f"unknown family {vfam!r}")


def make_grid(cfg: Config) -> Grid:
    g = cfg.grid
    return Grid(g.nx, g.ny, g.nz, g.b)


def make_cutoff(cfg: Config, grid: Grid) -> CutoffProfile:
    sup = 0.0 if cfg.initial_data.snapshot else psi0_sup_estimate(cfg)
    return build_cutoff(grid, cfg.cutoff.delta0, cfg.cutoff.delta1, psi0_sup=sup)


def build_initial_state(cfg: Config, grid: Grid, cutoff: CutoffProfile):
    """(psi0, v0) from the named families; snapshot resume is handled by the CLI."""
    from .geometry import GeometrySnapshot

    spec = cfg.initial_data.psi0
    fam = spec.get("family", "flat")
    if fam == "flat":
        psi = np.zeros((grid.nx, grid.ny))
    elif fam == "single_mode":
        psi, _ = initial_data.single_mode_wave(
            grid,
            eps=float(spec.get("eps", 1e-4)),
            kx=int(spec.get("kx", 1)),
            ky=int(spec.get("ky", 0)),
            phase=float(spec.get("phase", 0.0)),
        )
    else:
        raise ConfigError("initial_data.psi0.family", f"unknown family {fam!r}")

    vspec = cfg.initial_data.v0
    vfam = vspec.get("family", "rest")
    if vfam == "rest":
        v = np.zeros((3, grid.nx, grid.ny, grid.nz))
    elif vfam == "columnar_vortex":
        _, v = initial_data.columnar_vortex(
            grid,
            amplitude=float(vspec.get("amplitude", 0.1)),
            kx=int(vspec.get("kx", 1)),
            ky=int(vspec.get("ky", 1)),
        )
    elif vfam == "random_solenoidal":
        geom = GeometrySnapshot(grid, cutoff, psi, np.zeros_like(psi))
        v = initial_data.random_solenoidal(
            geom,
            seed=int(vspec.get("seed", 0)),
            amplitude=float(vspec.get("amplitude", 0.1)),
            kmax=int(vspec.get("kmax", 3)),
            decay=float(vspec.get("decay", 2.5)),
        )
    else:
        raise ConfigError("initial_data.v0.family", f"unknown family {vfam!r}")
    return psi, v
