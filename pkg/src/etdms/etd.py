"""Exact per-mode integration of the regularized ETD multistep step.

On each interval ``[t_n, t_n + tau_n]`` every Fourier mode solves

    m u' + eps * lam * u = g(s),   g(s) = sum_j c_j s**j,

with ``m = 1 + A tau**k lam**p`` and ``g`` the Lagrange interpolant of the
previous nonlinear evaluations. The solution is written with phi-functions,
which also gives dense output and its time derivative anywhere in the step.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .coefficients import LagrangeWindow, StabilizationConfig
from .spectral import PeriodicGrid, SpectralField, l2_norm_squared

PHI_SWITCH = 0.5
MAX_PHI_ORDER = 7
_SERIES_TERMS = 30


def phi_series(j: int, z) -> np.ndarray:
    """Taylor series ``sum_m z**m / (m + j)!``; accurate for small ``|z|``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for m in range(_SERIES_TERMS, -1, -1):
        out = out * z + 1.0 / math.factorial(m + j)
    return out


def phi_direct(j: int, z) -> np.ndarray:
    """Closed form via ``phi_{j+1} = (phi_j - 1/j!) / z``; for ``|z|`` away from 0."""
    z = np.asarray(z, dtype=float)
    if j == 0:
        return np.exp(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.expm1(z) / z
        for i in range(1, j):
            out = (out - 1.0 / math.factorial(i)) / z
    return out


def phi(j: int, z):
    """``phi_j(z)`` with the series branch used for ``|z| <= 0.5``."""
    if j < 0 or j > MAX_PHI_ORDER:
        raise ValueError(f"phi order must be in [0, {MAX_PHI_ORDER}], got {j}")
    z_arr = np.asarray(z, dtype=float)
    small = np.abs(z_arr) <= PHI_SWITCH
    out = np.empty_like(z_arr)
    out[small] = phi_series(j, z_arr[small])
    out[~small] = phi_direct(j, z_arr[~small])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ModeDecay:
    """Per-mode linear data: ``lam`` of L, Dupont-Douglas multiplier, decay rate."""

    lam_L: np.ndarray
    multiplier: np.ndarray
    mu: np.ndarray
    p_k: float = 1.0

    @classmethod
    def build(cls, lam, epsilon: float, a_stab: float = 0.0, tau_reg: float = 0.0,
              k: int = 1, p_k: float = 1.0) -> ModeDecay:
        lam = np.asarray(lam, dtype=float)
        m = 1.0 + a_stab * tau_reg**k * lam**p_k
        return cls(lam, m, epsilon * lam / m, p_k)

    @classmethod
    def from_config(cls, lam, epsilon: float, config: StabilizationConfig,
                    tau_reg: float) -> ModeDecay:
        return cls.build(lam, epsilon, config.a_stab, tau_reg, config.k, config.p_k)


@dataclass(frozen=True)
class DenseOutput:
    """Closed-form ``u(t_n + s)`` for ``s in [0, tau]`` on every mode."""

    u0: np.ndarray
    mu: np.ndarray
    source: np.ndarray  # (k, N, N): polynomial coefficients c_j of g(s)
    multiplier: np.ndarray
    tau: float
    grid: PeriodicGrid = field(repr=False)
    lam: np.ndarray = field(repr=False, default=None)
    p_k: float = 1.0

    def value(self, s: float) -> np.ndarray:
        x = -self.mu * s
        out = np.exp(x) * self.u0
        for j, c in enumerate(self.source):
            out = out + math.factorial(j) * s ** (j + 1) * phi(j + 1, x) * c / self.multiplier
        return out

    def source_at(self, s: float) -> np.ndarray:
        out = np.zeros_like(self.u0)
        for c in self.source[::-1]:
            out = out * s + c
        return out

    def derivative(self, s: float) -> np.ndarray:
        return -self.mu * self.value(s) + self.source_at(s) / self.multiplier


@dataclass(frozen=True)
class StepResult:
    u_new: SpectralField
    dense: DenseOutput


@dataclass
class SchemeState:
    """Current solution plus the last ``k`` sources (newest first) and ``k-1`` steps."""

    u: SpectralField
    t: float = 0.0
    sources: deque = field(default_factory=deque)
    steps: deque = field(default_factory=deque)

    def push(self, u_new: SpectralField, tau: float, source_new, k: int) -> None:
        """Advance by one accepted step and record ``source_new = F(u_new)``."""
        self.u = u_new
        self.t += tau
        self.steps.appendleft(tau)
        while len(self.steps) > max(k - 1, 0):
            self.steps.pop()
        self.sources.appendleft(source_new)
        while len(self.sources) > k:
            self.sources.pop()


class SchemeStateError(RuntimeError):
    pass


def _coeffs(x) -> np.ndarray:
    return x.coeffs if isinstance(x, SpectralField) else np.asarray(x)


def exact_step(u0: np.ndarray, source: np.ndarray, decay: ModeDecay, tau: float,
               grid: PeriodicGrid) -> StepResult:
    """Advance every mode by ``tau`` given polynomial source coefficients."""
    dense = DenseOutput(u0, decay.mu, source, decay.multiplier, tau, grid, decay.lam_L, decay.p_k)
    u_new = dense.value(tau)
    if not np.all(np.isfinite(u_new)):
        raise FloatingPointError("non-finite value produced by ETD step")
    return StepResult(SpectralField(u_new, grid), dense)


def etdms_step(state: SchemeState, window: LagrangeWindow, decay: ModeDecay, tau_n: float,
               forcing=None) -> StepResult:
    """One variable-step ETD-MS(k) step from ``state``.

    ``forcing``, when given, is a sequence of ``k`` spectral arrays sampled at
    ``t_n, t_{n-1}, ...``; it is added to the stored sources before
    interpolation.
    """
    k = window.k
    if len(state.sources) < k:
        raise SchemeStateError(f"history holds {len(state.sources)} sources, need {k}")
    if not tau_n > 0:
        raise ValueError(f"tau_n must be positive, got {tau_n}")
    g = np.stack([_coeffs(state.sources[i]) for i in range(k)])
    if forcing is not None:
        g = g + np.stack([_coeffs(forcing[i]) for i in range(k)])
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite value in nonlinear source")
    source = np.tensordot(window.xi.T, g, axes=1)
    return exact_step(state.u.coeffs, source, decay, tau_n, state.u.grid)


def etd1_step(u_n: SpectralField, f_n: SpectralField, tau: float, epsilon: float) -> SpectralField:
    """Plain first-order ETD step (no regularization)."""
    if u_n.grid != f_n.grid:
        raise ValueError("fields live on different grids")
    z = -epsilon * u_n.grid.k_fourth * tau
    return SpectralField(np.exp(z) * u_n.coeffs + tau * phi(1, z) * f_n.coeffs, u_n.grid)


def interval_seminorms(result: StepResult | DenseOutput, quad_order: int = 16) -> tuple[float, float]:
    """``(int ||du/dt||_H^2 dt, int ||du/dt||_{V^p}^2 dt)`` over the step.

    Gauss-Legendre on panels short enough that ``mu * panel <= 4``.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    dense = result.dense if isinstance(result, StepResult) else result
    x, w = np.polynomial.legendre.leggauss(quad_order)
    panels = max(1, math.ceil(float(np.max(dense.mu)) * dense.tau / 4.0))
    h = dense.tau / panels
    weights_p = dense.lam**dense.p_k
    s_h = s_p = 0.0
    for pnl in range(panels):
        for xq, wq in zip(x, w):
            s = pnl * h + 0.5 * h * (xq + 1.0)
            du = dense.derivative(s)
            s_h += 0.5 * h * wq * l2_norm_squared(du, dense.grid)
            s_p += 0.5 * h * wq * l2_norm_squared(du, dense.grid, weights_p)
    return s_h, s_p
