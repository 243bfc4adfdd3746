"""Mixed Fourier/Chebyshev collocation grid.

The fluid slab is the periodic box [0, 2pi)^2 in the horizontal times the
vertical interval [-b, 0].  Horizontal directions use equispaced Fourier
collocation; the vertical uses Chebyshev-Lobatto points mapped so that node 0
is the top boundary (x3 = 0) and node nz-1 is the bottom (x3 = -b).

All fields are real float64 arrays: surface fields have shape (nx, ny),
volume fields (nx, ny, nz), and velocity/vector fields (3, nx, ny, nz).
A Grid instance is immutable after construction; internal caches are
append-only and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iter_product

import numpy as np

TWO_PI = 2.0 * np.pi


def chebyshev_lobatto(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and differentiation matrix on [-1, 1] with n points.

    Standard Lobatto construction: x_j = cos(pi j / (n-1)), so x runs from
    +1 down to -1.  Rows of D differentiate a nodal polynomial interpolant.
    The diagonal uses negative row sums, which keeps D exact on constants.
    """
    if n < 2:
        raise ValueError("need at least 2 vertical nodes")
    m = n - 1
    x = np.cos(np.pi * np.arange(n) / m)
    c = np.ones(n)
    c[0] = 2.0
    c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights for the n Chebyshev-Lobatto nodes on [-1, 1]."""
    if n < 2:
        raise ValueError("need at least 2 vertical nodes")
    m = n - 1
    theta = np.pi * np.arange(n) / m
    w = np.zeros(n)
    v = np.ones(m - 1)
    ks = np.arange(1, m // 2 + 1)
    inner = theta[1:-1]
    for k in ks:
        factor = 2.0 if 2 * k != m else 1.0
        v -= factor * np.cos(2.0 * k * inner) / (4.0 * k * k - 1.0)
    w[1:-1] = 2.0 * v / m
    # Endpoint weight: 1/(m^2-1) for even m, 1/m^2 for odd m.
    w[0] = w[-1] = 1.0 / (m * m - 1.0) if m % 2 == 0 else 1.0 / (m * m)
    return w


@dataclass(frozen=True)
class SupNorms:
    """Grid sup norms of a field and its derivatives up to a given order.

    `total` is the sum of the sups of all derivatives of order <= k (a
    discrete C^k norm); `by_order[j]` sums only the order-j derivatives;
    `sup` is the plain sup.
    """

    sup: float
    by_order: tuple[float, ...]
    total: float


def tangential_multi_indices(order: int) -> list[tuple[int, int]]:
    """All (a1, a2) with a1 + a2 == order."""
    return [(order - j, j) for j in range(order + 1)]


class Grid:
    """Collocation grid for the slab T^2 x [-b, 0]."""

    def __init__(self, nx: int, ny: int, nz: int, b: float):
        if nx < 4 or ny < 4:
            raise ValueError("tangential resolutions must be at least 4")
        if nz < 8:
            raise ValueError("vertical resolution must be at least 8")
        if b <= 0:
            raise ValueError("depth must be positive")
        self.nx = int(nx)
        self.ny = int(ny)
        self.nz = int(nz)
        self.b = float(b)

        self.x1 = TWO_PI * np.arange(nx) / nx
        self.x2 = TWO_PI * np.arange(ny) / ny
        xhat, Dhat = chebyshev_lobatto(nz)
        # Map [-1,1] -> [-b,0] with node 0 at the top.
        self.z = (xhat - 1.0) * (self.b / 2.0)
        self.Dz = Dhat * (2.0 / self.b)
        self.Dz2 = self.Dz @ self.Dz
        self.wz = clenshaw_curtis_weights(nz) * (self.b / 2.0)

        self.k1 = np.fft.fftfreq(nx, d=1.0 / nx)
        self.k2 = np.fft.fftfreq(ny, d=1.0 / ny)
        self.kx_2d = self.k1[:, None]
        self.ky_2d = self.k2[None, :]

        keep1 = np.abs(self.k1) <= nx // 3
        keep2 = np.abs(self.k2) <= ny // 3
        self.dealias_mask = keep1[:, None] & keep2[None, :]
        self._mask_r = self.dealias_mask[:, : ny // 2 + 1]
        self._k1_half = np.fft.rfftfreq(nx, d=1.0 / nx)
        self._k2_half = np.fft.rfftfreq(ny, d=1.0 / ny)

        self.surface_weight = (TWO_PI / nx) * (TWO_PI / ny)
        self.surface_area = TWO_PI * TWO_PI

        self._nyq1 = np.where(2 * np.abs(self.k1) == nx, 0.0, 1.0)
        self._nyq2 = np.where(2 * np.abs(self.k2) == ny, 0.0, 1.0)

        self._cache: dict = {}

    # ------------------------------------------------------------------
    # transforms and derivatives

    def deriv_tangential(self, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        """Spectral derivative along tangential axis 1 or 2.

        Odd orders zero the Nyquist mode (its derivative has no consistent
        real representation); even orders keep it.
        """
        if axis not in (1, 2):
            raise ValueError("axis must be 1 or 2")
        if order < 0:
            raise ValueError("order must be nonnegative")
        if order == 0:
            return np.array(f, copy=True)
        ax = axis - 1
        n = self.nx if axis == 1 else self.ny
        k = self._k1_half if axis == 1 else self._k2_half
        fh = np.fft.rfft(f, axis=ax)
        mult = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            mult = mult.copy()
            mult[-1] = 0.0
        shape = [1] * f.ndim
        shape[ax] = k.size
        fh *= mult.reshape(shape)
        return np.fft.irfft(fh, n=n, axis=ax)

    def deriv_vertical(self, f: np.ndarray) -> np.ndarray:
        """Chebyshev derivative along the last (vertical) axis."""
        if f.shape[-1] != self.nz:
            raise ValueError("vertical axis size mismatch")
        return np.tensordot(f, self.Dz, axes=([-1], [1]))

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero tangential modes with |k| > n//3 in either direction."""
        fh = np.fft.rfft2(f, axes=(0, 1))
        if f.ndim == 2:
            fh *= self._mask_r
        else:
            fh *= self._mask_r[:, :, None]
        return np.fft.irfft2(fh, s=(self.nx, self.ny), axes=(0, 1))

    def pmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise product followed by the 2/3-rule tangential filter."""
        return self.dealias(a * b)

    # ------------------------------------------------------------------
    # traces and quadrature

    def top(self, f: np.ndarray) -> np.ndarray:
        return f[..., 0]

    def bottom(self, f: np.ndarray) -> np.ndarray:
        return f[..., -1]

    def integrate_surface(self, f: np.ndarray) -> float:
        """Trapezoid (here: exact equal-weight) rule over the torus."""
        return float(np.sum(f) * self.surface_weight)

    def integrate_volume(self, f: np.ndarray) -> float:
        """Tangential trapezoid times vertical Clenshaw-Curtis."""
        return float(np.sum(np.sum(f, axis=(0, 1)) * self.wz) * self.surface_weight)

    # ------------------------------------------------------------------
    # norms

    def l2_surface(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.integrate_surface(f * f), 0.0)))

    def l2_volume(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.integrate_volume(f * f), 0.0)))

    def boundary_sobolev_norm(self, f: np.ndarray, s: float) -> float:
        """Fractional Sobolev norm of a surface field.

        Uses the Fourier symbol (1 + |k|^2)^s; the constant function has
        norm 2*pi at every s, matching the continuum L^2 normalization on
        the torus of side 2*pi.
        """
        if f.shape != (self.nx, self.ny):
            raise ValueError("expected a surface field")
        if not 0.0 <= s <= 6.0:
            raise ValueError("order out of the supported range [0, 6]")
        c = np.fft.fft2(f) / (self.nx * self.ny)
        k2 = self.kx_2d**2 + self.ky_2d**2
        total = np.sum((1.0 + k2) ** s * np.abs(c) ** 2)
        return float(TWO_PI * np.sqrt(total))

    def interior_sobolev_norm(self, f: np.ndarray, s: int) -> float:
        """Integer-order Sobolev norm of a volume field.

        Sums squared weighted-L^2 norms of all mixed derivatives up to
        order s; tangential derivatives are spectral, vertical ones use the
        Chebyshev matrix.
        """
        if f.shape != (self.nx, self.ny, self.nz):
            raise ValueError("expected a volume field")
        if s not in (0, 1, 2, 3):
            raise ValueError("order must be an integer in 0..3")
        total = 0.0
        for g1, g2, g3 in _multi_indices_3d(s):
            d = f
            if g1:
                d = self.deriv_tangential(d, 1, g1)
            if g2:
                d = self.deriv_tangential(d, 2, g2)
            for _ in range(g3):
                d = self.deriv_vertical(d)
            total += self.integrate_volume(d * d)
        return float(np.sqrt(max(total, 0.0)))

    def holder_and_sup_norms(self, f: np.ndarray, k: int) -> SupNorms:
        """Grid sups of tangential derivatives up to order k.

        Defined for surface fields; the C^k proxy is the sum over orders of
        the max sup at each order's multi-indices.
        """
        if f.shape != (self.nx, self.ny):
            raise ValueError("expected a surface field")
        if k not in (0, 1, 2, 3):
            raise ValueError("order must be an integer in 0..3")
        by_order = []
        for order in range(k + 1):
            worst = 0.0
            for a1, a2 in tangential_multi_indices(order):
                d = f
                if a1:
                    d = self.deriv_tangential(d, 1, a1)
                if a2:
                    d = self.deriv_tangential(d, 2, a2)
                worst = max(worst, float(np.max(np.abs(d))))
            by_order.append(worst)
        return SupNorms(sup=by_order[0], by_order=tuple(by_order), total=float(sum(by_order)))

    def sup_volume(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f)))


def _multi_indices_3d(s: int) -> list[tuple[int, int, int]]:
    out = []
    for g1, g2, g3 in _iter_product(range(s + 1), repeat=3):
        if g1 + g2 + g3 <= s:
            out.append((g1, g2, g3))
    return out


def make_grid(nx: int, ny: int, nz: int, b: float) -> Grid:
    return Grid(nx, ny, nz, b)
