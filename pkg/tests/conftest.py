"""Shared fixtures.  The expensive manufactured states are session-scoped."""

import numpy as np
import pytest

from euler_fsbc.geometry import GeometrySnapshot, build_cutoff
from euler_fsbc.grid import Grid
from euler_fsbc.verification import (
    pressure_manufactured_case,
    transport_case,
    vortical_state,
)


@pytest.fixture(scope="session")
def small_grid() -> Grid:
    return Grid(12, 12, 9, 3.0)


@pytest.fixture(scope="session")
def flat_geometry():
    g = Grid(16, 16, 16, 2.5)
    cut = build_cutoff(g, 0.2, 2.4, psi0_sup=0.0)
    psi = np.zeros((16, 16))
    return g, GeometrySnapshot(g, cut, psi, psi)


@pytest.fixture(scope="session")
def curved_geometry():
    g = Grid(16, 16, 16, 3.0)
    cut = build_cutoff(g, 0.2, 2.8, psi0_sup=0.1)
    psi = 0.05 * np.cos(g.x1[:, None]) + 0.03 * np.sin(g.x2[None, :])
    psi_t = 0.02 * np.sin(g.x1[:, None] + g.x2[None, :]) + 0.0 * psi
    return g, GeometrySnapshot(g, cut, psi, psi_t)


@pytest.fixture(scope="session")
def transport_setup():
    return transport_case(12)


@pytest.fixture(scope="session")
def vortical_setup():
    return vortical_state(16, 16)


@pytest.fixture(scope="session")
def pressure_setup():
    return pressure_manufactured_case()
