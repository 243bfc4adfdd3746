"""Named analytic initial-data families.

Every family is deterministic given its parameters (and seed, where one
exists), so runs are reproducible and linear-theory oracles apply.
"""

from __future__ import annotations

import math

import numpy as np

from .elliptic import project_divergence_free
from .geometry import GeometrySnapshot
from .grid import Grid


def rest(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Flat surface, fluid at rest."""
    psi = np.zeros((grid.nx, grid.ny))
    v = np.zeros((3, grid.nx, grid.ny, grid.nz))
    return psi, v


def single_mode_wave(
    grid: Grid, eps: float = 1e-4, kx: int = 1, ky: int = 0, phase: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """One cosine surface mode at amplitude eps, fluid at rest.

    Released from rest this is a standing capillary wave; its frequency is
    the linearization oracle used by the dispersion experiment.
    """
    X1 = grid.x1[:, None]
    X2 = grid.x2[None, :]
    psi = eps * np.cos(kx * X1 + ky * X2 + phase) + 0.0 * (X1 + X2)
    v = np.zeros((3, grid.nx, grid.ny, grid.nz))
    return psi, v


def columnar_vortex(
    grid: Grid, amplitude: float = 0.1, kx: int = 1, ky: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Depth-independent horizontal swirl from a surface streamfunction.

    v = (-d2 theta, d1 theta, 0) has exactly zero flattened divergence for
    any surface shape because the vertical derivative vanishes and the
    tangential parts cancel spectrally, so no projection is needed.
    """
    X1 = grid.x1[:, None]
    X2 = grid.x2[None, :]
    theta = amplitude * np.cos(kx * X1) * np.cos(ky * X2) + 0.0 * (X1 + X2)
    v1 = -grid.deriv_tangential(theta, 2)
    v2 = grid.deriv_tangential(theta, 1)
    col = np.zeros((3, grid.nx, grid.ny, grid.nz))
    col[0] = v1[:, :, None]
    col[1] = v2[:, :, None]
    return np.zeros((grid.nx, grid.ny)), col


def random_velocity(
    grid: Grid,
    seed: int = 0,
    amplitude: float = 0.1,
    kmax: int = 3,
    decay: float = 2.5,
    bottom_zero: bool = True,
) -> np.ndarray:
    """Random smooth velocity with geometric spectral decay (pre-projection).

    Each tangential mode up to kmax gets an independent normal coefficient
    weighted by exp(-decay * (|kx| + |ky| - 1)); the vertical profile is a
    fixed low-degree polynomial, forced to zero at the bottom for the
    third component so impermeability survives projection.
    """
    rng = np.random.default_rng(seed)
    X1 = grid.x1[:, None]
    X2 = grid.x2[None, :]
    zb = (grid.z + grid.b) / grid.b
    prof = 1.0 + 0.7 * zb + 0.4 * zb**2
    prof_btm = prof * zb
    v = np.zeros((3, grid.nx, grid.ny, grid.nz))
    for comp in range(3):
        pz = prof_btm if (bottom_zero and comp == 2) else prof
        acc = np.zeros((grid.nx, grid.ny))
        for k1 in range(-kmax, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                if k1 == 0 and k2 == 0:
                    continue
                w = math.exp(-decay * (abs(k1) + abs(k2) - 1))
                c, s = rng.normal(size=2)
                acc += w * (c * np.cos(k1 * X1 + k2 * X2) + s * np.sin(k1 * X1 + k2 * X2))
        v[comp] = amplitude * acc[:, :, None] * pz[None, None, :]
    return v


def random_solenoidal(
    geom: GeometrySnapshot,
    seed: int = 0,
    amplitude: float = 0.1,
    kmax: int = 3,
    decay: float = 2.5,
) -> np.ndarray:
    """Projected random field: divergence-free for the given surface."""
    raw = random_velocity(geom.grid, seed, amplitude, kmax, decay, bottom_zero=True)
    v, _ = project_divergence_free(raw, geom)
    return v


FAMILIES = ("rest", "single_mode_wave", "random_solenoidal", "columnar_vortex")
