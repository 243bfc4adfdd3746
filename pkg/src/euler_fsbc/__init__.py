"""Pseudo-spectral free-surface incompressible flow in flattened coordinates.

The solver evolves velocity and surface elevation on a periodic horizontal
torus over a finite-depth layer, with surface tension driving the free
boundary.  A vertical cutoff confines the surface's influence on the
coordinate change to a band below the top, so the bottom stays rigid.

Layout:
    grid         tangential Fourier / vertical Chebyshev discretization
    geometry     cutoff, coordinate change, metric factors
    operators    flattened differential operators and commutator remainders
    elliptic     pressure and projection solves
    dynamics     RK4 stepping with the kinematic boundary update
    diagnostics  norms, identities, breakdown classification
    initial_data initial condition families
    config       YAML configuration and validation
    snapshots    binary state snapshots and the CSV time series
    verification named self-checks and dispersion measurement
    cli          `euler-fsbc` entry point
"""

from .config import Config, ConfigError, parse_config
from .diagnostics import (
    BreakdownReport,
    BreakdownThresholds,
    DiagnosticsEngine,
    DiagnosticsRecord,
    classify_breakdown,
)
from .dynamics import State, Stepper, StepperSettings
from .geometry import CutoffProfile, GeometrySnapshot, build_cutoff
from .grid import Grid
from .snapshots import read_snapshot, write_snapshot

__all__ = [
    "BreakdownReport",
    "BreakdownThresholds",
    "Config",
    "ConfigError",
    "CutoffProfile",
    "DiagnosticsEngine",
    "DiagnosticsRecord",
    "GeometrySnapshot",
    "Grid",
    "State",
    "Stepper",
    "StepperSettings",
    "build_cutoff",
    "classify_breakdown",
    "parse_config",
    "read_snapshot",
    "write_snapshot",
]

__version__ = "0.1.0"
