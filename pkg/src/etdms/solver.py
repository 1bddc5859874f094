"""Drive the ETD-MS(k) scheme over a prescribed time mesh."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .coefficients import StabilizationConfig, lagrange_window
from .etd import DenseOutput, ModeDecay, SchemeState, etdms_step, exact_step, interval_seminorms
from .spectral import SpectralField, l2_norm_squared
from .time_mesh import TimeMesh

Forcing = Callable[[float], SpectralField]


@dataclass
class StepRecord:
    n: int
    t: float
    tau: float
    u: SpectralField
    pieces: list[DenseOutput]
    seminorms: tuple[float, float] | None = None


def _source(model, u: SpectralField, t: float, forcing: Forcing | None) -> SpectralField:
    f = model.nonlinear_term(u)
    return f if forcing is None else f + forcing(t)


def integrate(
    model,
    u0: SpectralField,
    mesh: TimeMesh,
    config: StabilizationConfig,
    *,
    tau_reg: float | None = None,
    forcing: Forcing | None = None,
    exact: Callable[[float], SpectralField] | None = None,
    startup: str = "etd1",
    seminorms: bool = False,
    quad_order: int = 16,
    substeps: int | None = None,
) -> Iterator[StepRecord]:
    """Yield one :class:`StepRecord` per mesh interval.

    ``tau_reg`` is the step used in the regularization ``A tau**k``; it
    defaults to the largest step of ``mesh``. The first ``k-1`` values come
    from ``startup``: ``"etd1"`` takes ``substeps`` (default ``k``)
    regularized first-order sub-steps per interval, ``"exact"`` copies ``exact(t)``.
    """
    k = config.k
    tau_reg = mesh.tau_max if tau_reg is None else tau_reg
    decay = ModeDecay.from_config(model.linear_symbol, model.epsilon, config, tau_reg)
    nodes = mesh.nodes
    state = SchemeState(u0, float(nodes[0]))
    state.sources.appendleft(_source(model, u0, state.t, forcing))
    one = lagrange_window(1, [])

    for n in range(len(mesh)):
        tau = float(nodes[n + 1] - nodes[n])
        if n < k - 1:
            if startup == "exact":
                if exact is None:
                    raise ValueError("startup='exact' needs an exact solution")
                u_new, pieces = exact(float(nodes[n + 1])), []
            elif startup == "etd1":
                u_new, pieces = _substeps(model, state.u, state.t, tau, substeps or k, decay, forcing)
            else:
                raise ValueError(f"unknown startup {startup!r}")
        else:
            window = lagrange_window(k, list(state.steps)) if k > 1 else one
            res = etdms_step(state, window, decay, tau)
            u_new, pieces = res.u_new, [res.dense]
        t_new = float(nodes[n + 1])
        state.push(u_new, tau, _source(model, u_new, t_new, forcing), k)
        state.t = t_new
        sn = None
        if seminorms and pieces:
            parts = [interval_seminorms(p, quad_order) for p in pieces]
            sn = (sum(p[0] for p in parts), sum(p[1] for p in parts))
        yield StepRecord(n + 1, t_new, tau, u_new, pieces, sn)


def _substeps(model, u, t, tau, count, decay, forcing):
    h = tau / count
    pieces = []
    for i in range(count):
        g = _source(model, u, t + i * h, forcing).coeffs
        res = exact_step(u.coeffs, g[None], decay, h, u.grid)
        pieces.append(res.dense)
        u = res.u_new
    return u, pieces


def final_state(records: Iterator[StepRecord]) -> StepRecord:
    last = None
    for last in records:
        pass
    if last is None:
        raise ValueError("empty mesh")
    return last


def l2_distance(a: SpectralField, b: SpectralField) -> float:
    """Discrete ``L2(Omega)`` distance ``sqrt(h^2 sum |a - b|^2)``."""
    return float(np.sqrt(l2_norm_squared(a.coeffs - b.coeffs, a.grid)))
