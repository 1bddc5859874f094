"""Periodic 2-D Fourier grid and diagonal spectral operators.

Coefficients use the full (Hermitian) ``numpy.fft.fft2`` layout with an
unnormalized forward transform and ``1/N**2`` on the inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Square periodic grid ``[0, L)^2`` with ``n_points`` nodes per side."""

    n_points: int
    length: float = 4.0 * np.pi

    def __post_init__(self):
        if self.n_points < 8 or self.n_points % 2:
            raise ValueError(f"n_points must be even and >= 8, got {self.n_points}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    def __eq__(self, other):
        if not isinstance(other, PeriodicGrid):
            return NotImplemented
        return self.n_points == other.n_points and self.length == other.length

    def __hash__(self):
        return hash((self.n_points, self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def area(self) -> float:
        return self.length**2

    @cached_property
    def indices(self) -> np.ndarray:
        """Signed mode indices in FFT order, Nyquist entry stored as ``+N/2``."""
        n = self.n_points
        j = np.fft.fftfreq(n, 1.0 / n)
        j[n // 2] = n // 2
        return j

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * self.indices / self.length

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n_points) * self.spacing
        return np.meshgrid(x, x, indexing="ij")

    @cached_property
    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers
        return k[:, None] ** 2 + k[None, :] ** 2

    @cached_property
    def k_fourth(self) -> np.ndarray:
        """Symbol of the biharmonic operator, ``|k|^4``."""
        return self.k_squared**2

    @cached_property
    def derivative_symbols(self) -> tuple[np.ndarray, np.ndarray]:
        # Nyquist wavenumber is zeroed for odd derivatives so real input stays real.
        k = self.wavenumbers.copy()
        k[self.n_points // 2] = 0.0
        ikx = 1j * np.broadcast_to(k[:, None], (self.n_points, self.n_points))
        iky = 1j * np.broadcast_to(k[None, :], (self.n_points, self.n_points))
        return ikx, iky

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        a = np.abs(self.indices)
        keep = a <= self.n_points / 3.0
        return keep[:, None] & keep[None, :]

    def check_shape(self, values: np.ndarray) -> None:
        shape = (self.n_points, self.n_points)
        if np.shape(values) != shape:
            raise ValueError(f"expected array of shape {shape}, got {np.shape(values)}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real periodic field on ``grid``."""

    coeffs: np.ndarray
    grid: PeriodicGrid = field(repr=False)

    def __post_init__(self):
        self.grid.check_shape(self.coeffs)

    def to_physical(self) -> np.ndarray:
        return to_physical(self)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real) / self.grid.n_points**2

    def __add__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return SpectralField(self.coeffs + other.coeffs, self.grid)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return SpectralField(self.coeffs - other.coeffs, self.grid)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.coeffs * scalar, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(-self.coeffs, self.grid)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> SpectralField:
        return cls(np.zeros((grid.n_points, grid.n_points), dtype=complex), grid)


def _check_same_grid(*fields: SpectralField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("fields live on different grids")


def to_spectral(values: np.ndarray, grid: PeriodicGrid) -> SpectralField:
    values = np.asarray(values, dtype=float)
    grid.check_shape(values)
    return SpectralField(np.fft.fft2(values), grid)


def to_physical(f: SpectralField) -> np.ndarray:
    return np.fft.ifft2(f.coeffs).real


def apply_biharmonic(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid.k_fourth * f.coeffs, f.grid)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(-f.grid.k_squared * f.coeffs, f.grid)


def gradient(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    ikx, iky = f.grid.derivative_symbols
    return SpectralField(ikx * f.coeffs, f.grid), SpectralField(iky * f.coeffs, f.grid)


def divergence(fx: SpectralField, fy: SpectralField) -> SpectralField:
    _check_same_grid(fx, fy)
    ikx, iky = fx.grid.derivative_symbols
    return SpectralField(ikx * fx.coeffs + iky * fy.coeffs, fx.grid)


def dealias(f: SpectralField) -> SpectralField:
    """Zero every mode with ``max(|j|, |m|) > N/3`` (2/3 rule)."""
    return SpectralField(f.coeffs * f.grid.dealias_mask, f.grid)


def l2_norm_squared(coeffs: np.ndarray, grid: PeriodicGrid, weights=None) -> float:
    """Grid L2 norm squared, ``h^2 * sum_x |v|^2``, evaluated from coefficients.

    ``weights`` multiplies ``|v_k|^2`` mode by mode, which gives the
    ``V^alpha`` norms when set to ``|k|^(4 alpha)``.
    """
    p = np.abs(coeffs) ** 2
    if weights is not None:
        p = p * weights
    return float(p.sum()) * grid.area / grid.n_points**4
