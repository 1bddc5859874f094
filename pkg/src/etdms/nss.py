"""No-slope-selection thin-film model ``u_t = -eps Lap^2 u - div(grad u / (1 + |grad u|^2))``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import StabilizationConfig
from .spectral import (
    PeriodicGrid,
    SpectralField,
    dealias,
    divergence,
    gradient,
    l2_norm_squared,
    to_spectral,
)


@dataclass(frozen=True)
class NssParams:
    epsilon: float
    grid: PeriodicGrid

    # Lipschitz data of the nonlinearity (V^1/2 -> V^-1/2, constant 1).
    beta = 0.5
    gamma = 0.5
    c_lip = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def linear_symbol(self) -> np.ndarray:
        return self.grid.k_fourth

    def nonlinear_term(self, u: SpectralField) -> SpectralField:
        return nonlinear_term(u, self)

    def energy(self, u: SpectralField) -> float:
        return energy(u, self)


@dataclass(frozen=True)
class Diagnostics:
    t: float
    energy: float
    modified_energy: float
    height: float
    slope: float
    mass: float


def nonlinear_term(u: SpectralField, params: NssParams) -> SpectralField:
    """``F(u) = -div(grad u / (1 + |grad u|^2))``, pseudo-spectral and dealiased."""
    grid = u.grid
    ux, uy = (g.to_physical() for g in gradient(u))
    denom = 1.0 + ux**2 + uy**2
    flux = to_spectral(ux / denom, grid), to_spectral(uy / denom, grid)
    out = dealias(-divergence(*flux))
    out.coeffs[0, 0] = 0.0
    return out


def energy(u: SpectralField, params: NssParams) -> float:
    """Grid energy ``(-1/2 ln(1 + |grad u|^2), 1) + eps/2 ||Lap u||^2``."""
    grid = u.grid
    ux, uy = (g.to_physical() for g in gradient(u))
    s = 1.0 + ux**2 + uy**2
    assert np.all(s >= 1.0)
    log_part = -0.5 * np.log(s).sum() * grid.spacing**2
    bending = 0.5 * params.epsilon * l2_norm_squared(u.coeffs, grid, grid.k_fourth)
    return float(log_part + bending)


class HistoryError(RuntimeError):
    pass


def modified_energy(seminorms, energy_value: float, config: StabilizationConfig,
                    tau: float) -> float:
    """Energy plus the weighted derivative seminorms of the last ``k-1`` intervals.

    ``seminorms[j-1]`` is the pair ``(S_H, S_P)`` for interval ``I_{n-j}``,
    newest first, as returned by :func:`etdms.etd.interval_seminorms`.
    """
    k = config.k
    if len(seminorms) < k - 1:
        raise HistoryError(f"need {k - 1} interval seminorms, got {len(seminorms)}")
    extra = 0.0
    for j in range(1, k):
        s_h, s_p = seminorms[j - 1]
        extra += config.c_bar[j] * (config.c3 * s_h + config.c4 * tau**k * s_p)
    return float(energy_value + config.c_lip * extra)


def roughness_and_slope(u: SpectralField) -> tuple[float, float]:
    """RMS deviation from the mean and RMS gradient magnitude."""
    grid = u.grid
    c = u.coeffs.copy()
    c[0, 0] = 0.0
    h = np.sqrt(l2_norm_squared(c, grid) / grid.area)
    m = np.sqrt(l2_norm_squared(u.coeffs, grid, grid.k_squared) / grid.area)
    return float(h), float(m)


def manufactured_solution(t: float, grid: PeriodicGrid) -> SpectralField:
    x, y = grid.coordinates
    return to_spectral(np.cos(t) * np.sin(x) * np.cos(y), grid)


def manufactured_forcing(t: float, grid: PeriodicGrid, epsilon: float) -> SpectralField:
    """Source making ``cos(t) sin(x) cos(y)`` an exact solution of the forced model."""
    params = NssParams(epsilon, grid)
    x, y = grid.coordinates
    shape = to_spectral(np.sin(x) * np.cos(y), grid)
    u = np.cos(t) * shape
    u_t = -np.sin(t) * shape
    lin = SpectralField(epsilon * grid.k_fourth * u.coeffs, grid)
    return u_t + lin - nonlinear_term(u, params)


def dual_norm(f: SpectralField) -> float:
    """``||f||_{V^-1/2}``: weights ``|k|^-2``, zero mode excluded."""
    k2 = f.grid.k_squared
    w = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    return float(np.sqrt(l2_norm_squared(f.coeffs, f.grid, w)))


def energy_norm(f: SpectralField) -> float:
    """``||f||_{V^1/2}``: weights ``|k|^2``."""
    return float(np.sqrt(l2_norm_squared(f.coeffs, f.grid, f.grid.k_squared)))


def diagnostics(u: SpectralField, params: NssParams, t: float, modified: float | None = None) -> Diagnostics:
    e = energy(u, params)
    h, m = roughness_and_slope(u)
    return Diagnostics(t, e, e if modified is None else modified, h, m, u.mean)
