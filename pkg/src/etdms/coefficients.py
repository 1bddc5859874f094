"""Variable-step Lagrange coefficients and the stabilization constant chain.

The chain runs ``C_j* -> Cbar_j -> (C_hat, C_tilde) -> C1..C4 -> A`` for a
nonlinearity that is Lipschitz from ``V^gamma`` to ``V^-beta`` with
constant ``c_lip``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P


class UnsupportedOrderError(NotImplementedError):
    """Raised when a closed form is requested for an order that has none."""


@dataclass(frozen=True)
class LagrangeWindow:
    """Basis ``l_i(s) = sum_j xi[i, j] s**j`` through the nodes ``0, -tau_{n-1}, ...``."""

    k: int
    steps: np.ndarray
    xi: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([[0.0], -np.cumsum(self.steps)])

    def evaluate(self, s) -> np.ndarray:
        """Basis values, shape ``(k,) + shape(s)``."""
        s = np.asarray(s, dtype=float)
        powers = s[..., None] ** np.arange(self.k)
        return np.moveaxis(powers @ self.xi.T, -1, 0)


def lagrange_window(k: int, steps) -> LagrangeWindow:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    steps = np.atleast_1d(np.asarray(steps, dtype=float))[: k - 1]
    if steps.size != k - 1:
        raise ValueError(f"need {k - 1} previous steps for k={k}, got {steps.size}")
    if np.any(~(steps > 0)):
        raise ValueError(f"steps must be positive, got {steps}")
    nodes = np.concatenate([[0.0], -np.cumsum(steps)])
    xi = np.zeros((k, k))
    for i in range(k):
        poly = np.array([1.0])
        for m in range(k):
            if m != i:
                poly = P.polymul(poly, [-nodes[m], 1.0]) / (nodes[i] - nodes[m])
        xi[i, : poly.size] = poly
    return LagrangeWindow(k=k, steps=steps, xi=xi)


def _defect_norm_sq(k: int, j: int, ratios: np.ndarray) -> float:
    """``||1 - sum_{i<j} l_i||^2`` over ``[0, tau_n]`` divided by ``tau_n``, with ``tau_n = 1``.

    ``ratios`` holds ``tau_{n-1}, ..., tau_{n-k+1}`` relative to ``tau_n``.
    """
    xi = lagrange_window(k, ratios).xi
    poly = -xi[:j].sum(axis=0)
    poly[0] += 1.0
    sq = P.polyint(P.polymul(poly, poly))
    return float(P.polyval(1.0, sq))


def estimate_c_star(k: int, r_c: float, samples: int = 9) -> np.ndarray:
    """Non-certified estimate of ``C_j*`` by dense search over step windows.

    Every window of ``k`` consecutive steps whose pairwise ratios stay within
    ``r_c`` is sampled on a tensor grid of ``samples`` points per ratio.
    """
    if k == 1:
        return np.array([1.0])
    grid = np.geomspace(1.0 / r_c, r_c, samples) if r_c > 1 else np.array([1.0])
    best = np.zeros(k)
    best[0] = 1.0
    for combo in itertools.product(grid, repeat=k - 1):
        window = np.concatenate([[1.0], combo])
        if window.max() / window.min() > r_c * (1 + 1e-12):
            continue
        for j in range(1, k):
            best[j] = max(best[j], math.sqrt(_defect_norm_sq(k, j, np.asarray(combo))))
    return best


def c_star_bounds(k: int, r_c: float = 1.0, table=None) -> np.ndarray:
    """Constants ``C_j*`` with ``||1 - sum_{i<j} l_i||_{L2(I_n)} <= C_j* tau_n**0.5``.

    Closed forms exist for ``k <= 2``. For ``k = 2`` the defect is
    ``s / tau_{n-1}`` on ``[0, tau_n]``, so ``C_1* = (tau_n/tau_{n-1}) / sqrt(3)``
    and the local ratio bound ``r_c`` gives ``r_c / sqrt(3)``.
    """
    if table is not None:
        c = np.asarray(table, dtype=float)
        if c.shape != (k,) or c[0] != 1.0:
            raise ValueError("c_star table must have length k and start with 1")
        return c
    if r_c < 1:
        raise ValueError(f"r_c must be >= 1, got {r_c}")
    if k == 1:
        return np.array([1.0])
    if k == 2:
        return np.array([1.0, r_c / math.sqrt(3.0)])
    raise UnsupportedOrderError(
        f"no closed-form C_j* for k={k}; pass a table or use estimate_c_star"
    )


@dataclass(frozen=True)
class StabilizationConfig:
    k: int
    beta: float
    gamma: float
    c_lip: float
    p_k: float
    q: float
    c_hat: float | None
    c_tilde: float | None
    c1: float
    c2: float
    c3: float
    c4: float
    c_star: np.ndarray
    c_bar: np.ndarray
    a_stab: float
    r_c: float
    step_restricted: bool = False

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["c_star"] = [float(x) for x in self.c_star]
        d["c_bar"] = [float(x) for x in self.c_bar]
        return d


def c_bar_from_c_star(c_star) -> np.ndarray:
    """``Cbar_j = sum_{l >= j} C_l*``."""
    return np.cumsum(np.asarray(c_star, dtype=float)[::-1])[::-1]


def young_constants(beta: float, gamma: float, p_k: float, c_hat, c_tilde):
    """``C1..C4`` of the interpolation estimate for given ``C_hat``, ``C_tilde``."""
    c1 = c2 = c3 = c4 = None
    if beta > 0:
        a = 1.0 - beta / p_k
        c1 = 0.5 * a * c_hat ** (1.0 / a) if a > 0 else 0.0
        c2 = beta / (2.0 * p_k) * c_hat ** (-p_k / beta)
    if gamma > 0:
        b = 1.0 - gamma / p_k
        c3 = 0.5 * b * c_tilde ** (1.0 / b) if b > 0 else 0.0
        c4 = gamma / (2.0 * p_k) * c_tilde ** (-p_k / gamma)
    return c1, c2, c3, c4


def _split_for_budget(weight: float, p_k: float, budget: float) -> float:
    # Solve 0.5 * (1 - w/p) * C**(1/(1 - w/p)) = budget for C.
    a = 1.0 - weight / p_k
    if a <= 0:
        # Degenerate p == weight: the H-coefficient vanishes for any C <= 1.
        return 1.0
    return (2.0 * budget / a) ** a


def stabilization(
    k: int,
    beta: float,
    gamma: float,
    c_lip: float = 1.0,
    r_c: float = 1.0,
    c_star=None,
    allow_unregularized: bool = False,
) -> StabilizationConfig:
    """Build the constant chain with the symmetric split of the ``C_hat, C_tilde`` budget.

    Both summands of ``(1-b/p) C_hat**(1/(1-b/p)) + (1-g/p) C_tilde**(1/(1-g/p))
    <= 2 / (C_L Cbar_0)`` are set to ``1 / (C_L Cbar_0)``. When one of
    ``beta, gamma`` is zero the corresponding side carries the fixed
    coefficient 1/2 and the other side takes the remaining budget.
    """
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be non-negative")
    if beta + gamma > 1:
        raise ValueError(f"beta + gamma must be <= 1, got {beta + gamma}")
    if c_lip <= 0:
        raise ValueError("c_lip must be positive")
    cs = c_star_bounds(k, r_c, table=c_star)
    cb = c_bar_from_c_star(cs)
    p_k = (beta + gamma) * k / 2.0

    if beta == 0 and gamma == 0:
        if not allow_unregularized:
            raise ValueError("beta = gamma = 0 requires allow_unregularized=True")
        return StabilizationConfig(
            k, beta, gamma, c_lip, p_k, 0.0, None, None, 0.5, 0.0, 0.5, 0.0,
            cs, cb, 0.0, r_c, step_restricted=True,
        )

    if beta > 0 and gamma > 0:
        q = 1.0 / (1.0 + gamma / beta)
        half = 1.0 / (c_lip * cb[0])
        c_hat = _split_for_budget(beta, p_k, half / 2.0)
        c_tilde = _split_for_budget(gamma, p_k, half / 2.0)
        c1, c2, c3, c4 = young_constants(beta, gamma, p_k, c_hat, c_tilde)
    else:
        q = 1.0 if gamma == 0 else 0.0
        remaining = 1.0 / (c_lip * cb[0]) - 0.5
        if remaining < 0:
            raise ValueError("C_L * Cbar_0 > 2: no admissible constants for this case")
        if gamma == 0:
            c_hat, c_tilde = _split_for_budget(beta, p_k, remaining), None
            c1, c2, _, _ = young_constants(beta, 0.0, p_k, c_hat, None)
            c3, c4 = 0.5, 0.0
        else:
            c_hat, c_tilde = None, _split_for_budget(gamma, p_k, remaining)
            _, _, c3, c4 = young_constants(0.0, gamma, p_k, None, c_tilde)
            c1, c2 = 0.5, 0.0
    a_stab = c_lip * (c2 + c4) * cb[0]
    return StabilizationConfig(
        k, beta, gamma, c_lip, p_k, q, c_hat, c_tilde, c1, c2, c3, c4, cs, cb, a_stab, r_c
    )


def budget_lhs(cfg: StabilizationConfig) -> float:
    """Left side of the ``C_hat, C_tilde`` admissibility inequality."""
    total = 0.0
    for w, c in ((cfg.beta, cfg.c_hat), (cfg.gamma, cfg.c_tilde)):
        if w > 0:
            a = 1.0 - w / cfg.p_k
            total += a * c ** (1.0 / a) if a > 0 else 0.0
    return total
