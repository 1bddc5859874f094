"""Brute-force references for tests: tight-tolerance explicit ODE solves and a
Vandermonde Lagrange basis. Nothing here touches the phi-function path."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .spectral import PeriodicGrid


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    t_span: tuple[float, float]
    rtol: float = 1e-12
    atol: float = 1e-14


@dataclass(frozen=True)
class OracleResult:
    y: np.ndarray
    error_estimate: float


def _solve(problem: OdeProblem, rtol: float, atol: float) -> np.ndarray:
    y0 = np.asarray(problem.y0)
    shape = y0.shape
    sol = solve_ivp(
        lambda t, y: np.ravel(problem.rhs(t, y.reshape(shape))),
        problem.t_span,
        y0.ravel(),
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise OracleFailure(sol.message)
    return sol.y[:, -1].reshape(shape)


def solve_reference(problem: OdeProblem) -> OracleResult:
    """DOP853 at the requested tolerance, checked against a 16x tighter run."""
    fine = _solve(problem, problem.rtol / 16, problem.atol / 16)
    coarse = _solve(problem, problem.rtol, problem.atol)
    scale = max(np.linalg.norm(fine), np.finfo(float).tiny)
    return OracleResult(fine, float(np.linalg.norm(coarse - fine) / scale))


def vandermonde_lagrange(nodes) -> np.ndarray:
    """Monomial coefficients ``xi[i, j]`` of the Lagrange basis at ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    if np.unique(nodes).size != nodes.size:
        raise ValueError("interpolation nodes must be distinct")
    V = np.vander(nodes, increasing=True)
    return np.linalg.solve(V, np.eye(nodes.size)).T


def scheme_step_problem(u0, sources, prev_steps, tau, grid: PeriodicGrid, epsilon,
                        a_stab, tau_reg, k, p_k, rtol=1e-12) -> OdeProblem:
    """Mode-space ODE of one regularized multistep step, built from scratch.

    ``sources`` are the nonlinear evaluations at ``t_n, t_{n-1}, ...`` and
    ``prev_steps`` the matching earlier step sizes.
    """
    lam = grid.k_fourth
    m = 1.0 + a_stab * tau_reg**k * lam**p_k
    nodes = np.concatenate([[0.0], -np.cumsum(prev_steps)])[:k]
    xi = vandermonde_lagrange(nodes)
    g = np.asarray(sources)[:k]

    def rhs(s, y):
        basis = xi @ (s ** np.arange(k))
        drive = np.tensordot(basis, g, axes=1)
        return (drive - epsilon * lam * y) / m

    scale = max(np.abs(u0).max(), 1.0)
    return OdeProblem(rhs, np.asarray(u0, dtype=complex), (0.0, tau), rtol, rtol * 1e-2 * scale)


def nss_problem(params, u0, T: float, rtol=1e-10) -> OdeProblem:
    """Full pseudo-spectral NSS right-hand side in coefficient space."""
    from .spectral import SpectralField

    grid = params.grid
    lam = grid.k_fourth

    def rhs(t, y):
        f = params.nonlinear_term(SpectralField(y, grid)).coeffs
        return f - params.epsilon * lam * y

    scale = max(np.abs(u0.coeffs).max(), 1.0)
    return OdeProblem(rhs, u0.coeffs.astype(complex), (0.0, T), rtol, rtol * 1e-2 * scale)
