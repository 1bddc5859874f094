"""Adaptive time stepping with an ETD1 / ETD-MS2 embedded pair."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import StabilizationConfig, lagrange_window, stabilization
from .etd import ModeDecay, SchemeState, etd1_step, etdms_step, exact_step, interval_seminorms
from .nss import Diagnostics, NssParams, energy, modified_energy, roughness_and_slope
from .spectral import SpectralField

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptiveConfig:
    rho: float = 0.95
    tol: float = 1e-3
    rate: float = 0.5
    tau_min: float = 1e-3
    tau_max: float = 1e-1
    max_retries: int = 20
    growth_cap: float | None = 4.0
    # "local": regularize step n with A*tau_n**2; "max": with A*tau_max**2.
    # "max" keeps an O(A tau_max**2) perturbation however small the steps get.
    regularization: str = "local"

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must be in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.growth_cap is not None and self.growth_cap < 1:
            raise ValueError("growth_cap must be >= 1")
        if self.regularization not in ("max", "local"):
            raise ValueError("regularization must be 'max' or 'local'")


def adp_update(e: float, tau: float, cfg: AdaptiveConfig) -> float:
    """``clamp(rho * (tol / e)**r * tau, tau_min, tau_max)``; ``e = 0`` gives ``tau_max``."""
    if e < 0:
        raise ValueError("error estimate must be non-negative")
    if e == 0:
        return cfg.tau_max
    new = cfg.rho * (cfg.tol / e) ** cfg.rate * tau
    return min(max(new, cfg.tau_min), cfg.tau_max)


@dataclass
class StepEvent:
    n: int
    t: float
    tau: float
    e_rel: float
    retries: int
    accepted: bool
    forced: bool = False
    energy: float = math.nan
    modified_energy: float = math.nan


@dataclass
class AdaptiveTrajectory:
    events: list[StepEvent] = field(default_factory=list)
    diagnostics: list[Diagnostics] = field(default_factory=list)
    snapshots: dict[float, SpectralField] = field(default_factory=dict)
    u: SpectralField | None = None

    @property
    def accepted(self) -> list[StepEvent]:
        return [e for e in self.events if e.accepted]

    @property
    def steps(self) -> np.ndarray:
        return np.array([e.tau for e in self.accepted])


def _rms(c: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(c) ** 2))) / c.shape[0]


def relative_difference(u1: SpectralField, u2: SpectralField) -> float:
    """Grid RMS of ``u1 - u2`` over grid RMS of ``u2``."""
    den = _rms(u2.coeffs)
    return _rms(u1.coeffs - u2.coeffs) / den if den > 0 else 0.0


def _next_step(t: float, T: float, tau: float, tau_min: float, tau_max: float) -> float:
    # Land on T without producing a final step below tau_min.
    rest = T - t
    if rest <= tau:
        return rest
    if rest - tau < tau_min:
        return rest if rest <= tau_max else 0.5 * rest
    return tau


def adaptive_run(
    u0: SpectralField,
    params: NssParams,
    cfg: AdaptiveConfig,
    T: float,
    *,
    stab: StabilizationConfig | None = None,
    snapshot_times=(),
    quad_order: int = 12,
) -> AdaptiveTrajectory:
    """Run the embedded-pair controller from ``u0`` up to time ``T``.

    Each attempt computes a plain ETD1 step and a regularized ETD-MS2 step
    with the same ``tau``; their relative RMS difference drives the step
    size. The ETD-MS2 value is kept on acceptance. The very first step has
    no history, so two regularized first-order half steps stand in for it.
    """
    if stab is None:
        r_c = cfg.growth_cap if cfg.growth_cap is not None else cfg.tau_max / cfg.tau_min
        stab = stabilization(2, params.beta, params.gamma, params.c_lip, r_c)
    lam = params.linear_symbol
    fixed_decay = ModeDecay.from_config(lam, params.epsilon, stab, cfg.tau_max)

    def decay_for(tau: float) -> ModeDecay:
        if cfg.regularization == "max":
            return fixed_decay
        return ModeDecay.from_config(lam, params.epsilon, stab, tau)

    traj = AdaptiveTrajectory()
    pending = sorted(float(s) for s in snapshot_times)
    state = SchemeState(u0, 0.0)
    state.sources.appendleft(params.nonlinear_term(u0))
    window_sn: list[tuple[float, float]] = []
    e0 = energy(u0, params)
    h0, m0 = roughness_and_slope(u0)
    traj.diagnostics.append(Diagnostics(0.0, e0, e0, h0, m0, u0.mean))
    while pending and pending[0] <= 0.0:
        traj.snapshots[pending.pop(0)] = u0

    tau = cfg.tau_min
    n = 0
    while state.t < T * (1 - 1e-14):
        tau = _next_step(state.t, T, tau, cfg.tau_min, cfg.tau_max)
        retries = 0
        while True:
            u1 = etd1_step(state.u, state.sources[0], tau, params.epsilon)
            decay = decay_for(tau)
            if len(state.sources) >= 2:
                res = etdms_step(state, lagrange_window(2, list(state.steps)), decay, tau)
                pieces = [res.dense]
                u2 = res.u_new
            else:
                u2, pieces = _half_steps(params, state.u, tau, decay)
            e = relative_difference(u1, u2)
            can_shrink = tau > cfg.tau_min and retries < cfg.max_retries
            if e > cfg.tol and can_shrink:
                traj.events.append(StepEvent(n + 1, state.t + tau, tau, e, retries, False))
                tau = min(adp_update(e, tau, cfg), tau)
                retries += 1
                continue
            break
        forced = e > cfg.tol
        if forced:
            log.warning("forced accept at t=%.6g with e=%.3g (tau=%.3g)", state.t, e, tau)

        src = params.nonlinear_term(u2)
        state.push(u2, tau, src, 2)
        n += 1
        parts = [interval_seminorms(p, quad_order) for p in pieces]
        window_sn = [(sum(p[0] for p in parts), sum(p[1] for p in parts))]
        e_now = energy(u2, params)
        tau_e = cfg.tau_max if cfg.regularization == "max" else tau
        e_mod = modified_energy(window_sn, e_now, stab, tau_e)
        h, m = roughness_and_slope(u2)
        traj.diagnostics.append(Diagnostics(state.t, e_now, e_mod, h, m, u2.mean))
        traj.events.append(StepEvent(n, state.t, tau, e, retries, True, forced, e_now, e_mod))
        while pending and pending[0] <= state.t + 1e-12:
            traj.snapshots[pending.pop(0)] = u2

        new_tau = adp_update(e, tau, cfg)
        if cfg.growth_cap is not None:
            new_tau = min(new_tau, cfg.growth_cap * tau)
        tau = max(new_tau, cfg.tau_min)
    traj.u = state.u
    return traj


def _half_steps(params: NssParams, u: SpectralField, tau: float, decay: ModeDecay):
    pieces = []
    for _ in range(2):
        g = params.nonlinear_term(u).coeffs
        res = exact_step(u.coeffs, g[None], decay, 0.5 * tau, u.grid)
        pieces.append(res.dense)
        u = res.u_new
    return u, pieces
