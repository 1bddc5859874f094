"""Experiment drivers: convergence tables, coarsening runs, adaptive comparisons.

Every CSV starts with ``#`` provenance lines (config, seed, constant chain,
package version) followed by a header row. Output is deterministic for a
given config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveConfig, AdaptiveTrajectory, adaptive_run
from .coefficients import StabilizationConfig, stabilization
from .nss import (
    Diagnostics,
    NssParams,
    diagnostics,
    manufactured_forcing,
    manufactured_solution,
    modified_energy,
)
from .solver import integrate, l2_distance
from .spectral import PeriodicGrid, SpectralField, dealias, to_physical, to_spectral
from .time_mesh import TimeMesh, max_window_ratio, perturbed_uniform, refine, uniform

log = logging.getLogger(__name__)

KINDS = ("converge", "coarsen", "adaptive", "step-debug")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "converge"
    n_points: int = 32
    length: float = 4.0 * math.pi
    epsilon: float = 0.01
    order: int = 2
    a_override: float | None = None
    r_c: float | None = None
    dt0: float = 0.0025
    T: float = 1.0
    amplitude: float = 0.1
    seed: int = 0
    levels: int = 7
    startup: str = "exact"
    initial: str = "manufactured"
    noise: float = 0.5
    output_dir: str = "out"
    snapshot_times: list[float] = field(default_factory=list)
    energy_fit_start: float = 100.0
    power_fit_start: float = 10.0
    quad_order: int = 16
    # Coarsening: skip the per-step seminorm quadrature when False.
    track_modified: bool = True
    debug_steps: int = 5
    adaptive: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.startup not in ("exact", "etd1"):
            raise ConfigError("startup must be 'exact' or 'etd1'")
        if self.initial not in ("manufactured", "sin_cos_noise", "random"):
            raise ConfigError(f"unknown initial condition {self.initial!r}")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        try:
            self.grid
            NssParams(self.epsilon, self.grid)
            self.adaptive_config
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.n_points, self.length)

    @property
    def params(self) -> NssParams:
        return NssParams(self.epsilon, self.grid)

    @property
    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(**self.adaptive)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def stab_for(cfg: ExperimentConfig, r_c: float) -> StabilizationConfig:
    p = cfg.params
    st = stabilization(cfg.order, p.beta, p.gamma, p.c_lip, r_c)
    if cfg.a_override is not None:
        st = replace(st, a_stab=float(cfg.a_override))
    return st


def growth_ratio(mesh: TimeMesh, k: int) -> float:
    """Largest ``tau_n / tau_m`` over windows of ``k`` steps (1 for ``k = 1``)."""
    return max(1.0, max_window_ratio(mesh.steps, k)[0])


def initial_condition(cfg: ExperimentConfig) -> SpectralField:
    grid = cfg.grid
    x, y = grid.coordinates
    base = np.sin(x) * np.cos(y)
    if cfg.initial == "manufactured":
        return to_spectral(base, grid)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    noise = cfg.noise * (2.0 * rng.random(x.shape) - 1.0)
    values = noise if cfg.initial == "random" else base + noise
    return dealias(to_spectral(values, grid))


# ---------------------------------------------------------------- output


def provenance_lines(cfg: ExperimentConfig, stab: StabilizationConfig | None = None, **extra) -> list[str]:
    lines = [
        f"etdms_version: {__version__}",
        f"config: {json.dumps(cfg.to_dict(), sort_keys=True)}",
        f"seed: {cfg.seed}",
    ]
    if stab is not None:
        lines.append(f"constants: {json.dumps(_jsonable(stab.as_dict()), sort_keys=True)}")
    for k, v in extra.items():
        lines.append(f"{k}: {json.dumps(_jsonable(v))}")
    return lines


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _atomic_write(path: Path, text: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(text, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header: list[str], rows, provenance: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in provenance:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Return ``(provenance_lines, rows)`` of a CSV written by :func:`write_csv`."""
    prov, body = [], []
    with open(path) as fh:
        for line in fh:
            (prov if line.startswith("#") else body).append(line)
    rows = list(csv.DictReader(body))
    return [p[2:].rstrip("\n") for p in prov], rows


def write_snapshot(directory, name: str, u: SpectralField, t: float, cfg: ExperimentConfig) -> Path:
    """Raw little-endian float64 grid values plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(to_physical(u), dtype="<f8")
    path = directory / f"{name}.bin"
    _atomic_write(path, values.tobytes())
    meta = {
        "shape": list(values.shape),
        "dtype": "<f8",
        "order": "C",
        "n_points": u.grid.n_points,
        "length": u.grid.length,
        "t": t,
        "config_hash": cfg.digest(),
        "etdms_version": __version__,
    }
    _atomic_write(directory / f"{name}.json", json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    values = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return values, meta


# ------------------------------------------------------------ convergence


@dataclass(frozen=True)
class ConvergenceRow:
    n_t: int
    error_uniform: float
    rate_uniform: float | None
    error_perturbed: float
    rate_perturbed: float | None


def manufactured_residual(grid: PeriodicGrid) -> float:
    """How far the manufactured profile is from a resolved, periodic grid function."""
    x, y = grid.coordinates
    v = np.sin(x) * np.cos(y)
    resolved = to_physical(dealias(to_spectral(v, grid)))
    # Periodicity: the profile must also match its own shift by one period.
    shift = np.sin(x + grid.length) * np.cos(y + grid.length)
    return float(max(np.abs(v - resolved).max(), np.abs(v - shift).max()))


def convergence_error(cfg: ExperimentConfig, mesh: TimeMesh, stab: StabilizationConfig) -> float:
    grid, eps = cfg.grid, cfg.epsilon
    params = cfg.params

    def forcing(t):
        return manufactured_forcing(t, grid, eps)

    last = None
    for last in integrate(
        params,
        manufactured_solution(0.0, grid),
        mesh,
        stab,
        forcing=forcing,
        exact=lambda t: manufactured_solution(t, grid),
        startup=cfg.startup,
    ):
        pass
    return l2_distance(last.u, manufactured_solution(mesh.final_time, grid))


def _rates(errors: list[float]) -> list[float | None]:
    return [None] + [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def run_convergence(cfg: ExperimentConfig, write: bool = True) -> list[ConvergenceRow]:
    """Errors at ``T`` on ``dt0 / N_T`` uniform meshes and on refinements of a
    seeded perturbed mesh, ``N_T = 1, 2, 4, ...``."""
    if manufactured_residual(cfg.grid) > 1e-8:
        raise ConfigError("grid does not resolve the manufactured solution")
    stab = stab_for(cfg, cfg.r_c if cfg.r_c is not None else 1.0)
    coarse = perturbed_uniform(cfg.dt0, cfg.T, cfg.amplitude, cfg.seed)
    eu, ep = [], []
    perturbed = coarse
    for level in range(cfg.levels):
        n_t = 2**level
        eu.append(convergence_error(cfg, uniform(cfg.dt0 / n_t, cfg.T), stab))
        ep.append(convergence_error(cfg, perturbed, stab))
        log.info("N_T=%d uniform=%.4e perturbed=%.4e", n_t, eu[-1], ep[-1])
        perturbed = refine(perturbed)
    ru, rp = _rates(eu), _rates(ep)
    rows = [ConvergenceRow(2**i, eu[i], ru[i], ep[i], rp[i]) for i in range(cfg.levels)]
    if write:
        write_csv(
            Path(cfg.output_dir) / "convergence.csv",
            ["N_T", "error_uniform", "rate_uniform", "error_perturbed", "rate_perturbed"],
            [(r.n_t, r.error_uniform, _blank(r.rate_uniform), r.error_perturbed,
              _blank(r.rate_perturbed)) for r in rows],
            provenance_lines(cfg, stab),
        )
        coarse.to_csv(Path(cfg.output_dir) / "perturbed_mesh.csv")
    return rows


def _blank(v):
    return "" if v is None else v


# ------------------------------------------------------------- coarsening


@dataclass
class Fit:
    a: float
    b: float
    window: tuple[float, float]
    points: int


@dataclass
class CoarseningResult:
    diagnostics: list[Diagnostics]
    steps: np.ndarray
    fits: dict[str, Fit]
    stab: StabilizationConfig
    u: SpectralField
    snapshots: dict[float, SpectralField]


def fit_log(t, y, t0: float, t1: float | None = None) -> Fit:
    """Least squares ``y = a ln t + b`` on ``t in [t0, t1]``."""
    t, y = np.asarray(t), np.asarray(y)
    t1 = t[-1] if t1 is None else t1
    sel = (t >= t0) & (t <= t1)
    if sel.sum() < 2:
        raise ValueError(f"fit window [{t0}, {t1}] holds fewer than two samples")
    a, b = np.polyfit(np.log(t[sel]), y[sel], 1)
    return Fit(float(a), float(b), (float(t0), float(t1)), int(sel.sum()))


def fit_power(t, y, t0: float, t1: float | None = None) -> Fit:
    """Least squares ``y = a t**b`` in log-log coordinates on ``[t0, t1]``."""
    t, y = np.asarray(t), np.asarray(y)
    t1 = t[-1] if t1 is None else t1
    sel = (t >= t0) & (t <= t1) & (y > 0)
    if sel.sum() < 2:
        raise ValueError(f"fit window [{t0}, {t1}] holds fewer than two samples")
    b, loga = np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)
    return Fit(float(np.exp(loga)), float(b), (float(t0), float(t1)), int(sel.sum()))


class SimulationDiverged(FloatingPointError):
    pass


def run_coarsening(cfg: ExperimentConfig, write: bool = True, fits: bool = True) -> CoarseningResult:
    """Unforced run on a perturbed mesh with per-step diagnostics and modified energy."""
    params = cfg.params
    k = cfg.order
    mesh = perturbed_uniform(cfg.dt0, cfg.T, cfg.amplitude, cfg.seed)
    r_c = cfg.r_c if cfg.r_c is not None else growth_ratio(mesh, k)
    stab = stab_for(cfg, r_c)
    tau_reg = mesh.tau_max
    u0 = initial_condition(cfg)
    out = Path(cfg.output_dir)
    pending = sorted(cfg.snapshot_times)
    snaps: dict[float, SpectralField] = {}

    diags = [diagnostics(u0, params, 0.0)]
    history: list[tuple[float, float]] = []
    last_good = (0.0, u0)
    records = integrate(params, u0, mesh, stab, tau_reg=tau_reg, startup="etd1",
                        seminorms=cfg.track_modified, quad_order=cfg.quad_order)
    while True:
        try:
            rec = next(records, None)
            if rec is not None and not np.all(np.isfinite(rec.u.coeffs)):
                raise FloatingPointError("non-finite state")
        except FloatingPointError as exc:
            if write:
                write_snapshot(out / "snapshots", "last_good", last_good[1], last_good[0], cfg)
            raise SimulationDiverged(f"{exc} after t={last_good[0]}") from exc
        if rec is None:
            break
        d = diagnostics(rec.u, params, rec.t)
        if rec.seminorms is not None:
            history.insert(0, rec.seminorms)
            del history[max(k - 1, 0):]
        if cfg.track_modified and len(history) >= k - 1:
            d = replace(d, modified_energy=modified_energy(history, d.energy, stab, tau_reg))
        else:
            d = replace(d, modified_energy=math.nan)
        diags.append(d)
        last_good = (rec.t, rec.u)
        while pending and pending[0] <= rec.t + 1e-12:
            snaps[pending.pop(0)] = rec.u

    t = np.array([d.t for d in diags])
    fit_map: dict[str, Fit] = {}
    if fits:
        for name, fn, col, t0 in (
            ("energy", fit_log, "energy", cfg.energy_fit_start),
            ("height", fit_power, "height", cfg.power_fit_start),
            ("slope", fit_power, "slope", cfg.power_fit_start),
        ):
            try:
                fit_map[name] = fn(t[1:], [getattr(d, col) for d in diags[1:]], t0)
            except ValueError as exc:
                log.warning("skipping %s fit: %s", name, exc)
    result = CoarseningResult(diags, mesh.steps, fit_map, stab, last_good[1], snaps)
    if write:
        steps = np.concatenate([[0.0], mesh.steps])
        write_csv(
            out / "coarsen.csv",
            ["step", "t", "tau", "E", "E_modified", "h", "m", "mass"],
            [(i, d.t, steps[i], d.energy, d.modified_energy, d.height, d.slope, d.mass)
             for i, d in enumerate(diags)],
            provenance_lines(cfg, stab, fits={k: asdict(v) for k, v in fit_map.items()}),
        )
        for ts, u in snaps.items():
            write_snapshot(out / "snapshots", f"u_t{ts:g}", u, ts, cfg)
    return result


def modified_energy_violations(diags: list[Diagnostics], start: int = 2, rel: float = 1e-8) -> list[int]:
    """Indices ``n >= start`` with ``E~(u^{n+1}) > E~(u^n) + rel * max(1, |E~(u^n)|)``."""
    bad = []
    for n in range(start, len(diags) - 1):
        a, b = diags[n].modified_energy, diags[n + 1].modified_energy
        if not (b <= a + rel * max(1.0, abs(a))):
            bad.append(n)
    return bad


# --------------------------------------------------------------- adaptive


@dataclass
class AdaptiveComparison:
    large: SpectralField
    adaptive: AdaptiveTrajectory
    small: SpectralField
    distance_adaptive: float
    distance_large: float
    steps_large: int
    steps_small: int
    diagnostics_large: list[Diagnostics]
    diagnostics_small: list[Diagnostics]

    @property
    def steps_adaptive(self) -> int:
        return len(self.adaptive.accepted)


def _uniform_run(cfg: ExperimentConfig, u0: SpectralField, tau: float) -> tuple[SpectralField, list[Diagnostics]]:
    params = cfg.params
    mesh = uniform(tau, cfg.T)
    stab = stab_for(cfg, 1.0)
    diags = [diagnostics(u0, params, 0.0)]
    u = u0
    for rec in integrate(params, u0, mesh, stab, startup="etd1"):
        u = rec.u
        diags.append(diagnostics(u, params, rec.t))
    return u, diags


def run_adaptive_comparison(cfg: ExperimentConfig, write: bool = True) -> AdaptiveComparison:
    """Uniform ``tau_max``, adaptive, and uniform ``tau_min`` runs from one initial state."""
    acfg = cfg.adaptive_config
    params = cfg.params
    u0 = initial_condition(cfg)
    stab = None
    if cfg.a_override is not None or cfg.r_c is not None:
        stab = stab_for(cfg, cfg.r_c if cfg.r_c is not None else (acfg.growth_cap or 1.0))
    traj = adaptive_run(u0, params, acfg, cfg.T, stab=stab, snapshot_times=cfg.snapshot_times)
    large, dl = _uniform_run(cfg, u0, acfg.tau_max)
    small, ds = _uniform_run(cfg, u0, acfg.tau_min)
    res = AdaptiveComparison(
        large, traj, small,
        l2_distance(traj.u, small), l2_distance(large, small),
        len(dl) - 1, len(ds) - 1, dl, ds,
    )
    if write:
        out = Path(cfg.output_dir)
        prov = provenance_lines(
            cfg, stab,
            distance_adaptive_vs_small=res.distance_adaptive,
            distance_large_vs_small=res.distance_large,
            steps=[res.steps_large, res.steps_adaptive, res.steps_small],
        )
        write_csv(
            out / "adaptive.csv",
            ["step", "t", "tau", "e_rel", "retries", "accepted", "E", "E_modified"],
            [(e.n, e.t, e.tau, e.e_rel, e.retries, int(e.accepted), e.energy, e.modified_energy)
             for e in traj.events],
            prov,
        )
        for name, diags in (("uniform_large", dl), ("uniform_small", ds)):
            write_csv(
                out / f"{name}.csv",
                ["step", "t", "E", "h", "m", "mass"],
                [(i, d.t, d.energy, d.height, d.slope, d.mass) for i, d in enumerate(diags)],
                prov,
            )
        for name, u in (("large", large), ("adaptive", traj.u), ("small", small)):
            write_snapshot(out / "snapshots", f"final_{name}", u, cfg.T, cfg)
    return res


# ------------------------------------------------------------- step debug


def run_step_debug(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """A few steps with per-step internals: norms, energies, seminorms, multipliers."""
    params = cfg.params
    mesh = perturbed_uniform(cfg.dt0, cfg.dt0 * cfg.debug_steps, cfg.amplitude, cfg.seed)
    stab = stab_for(cfg, cfg.r_c if cfg.r_c is not None else growth_ratio(mesh, cfg.order))
    u0 = initial_condition(cfg)
    rows = []
    history: list = []
    for rec in integrate(params, u0, mesh, stab, startup="etd1", seminorms=True,
                         quad_order=cfg.quad_order):
        history.insert(0, rec.seminorms)
        del history[max(cfg.order - 1, 0):]
        d = diagnostics(rec.u, params, rec.t)
        e_mod = (modified_energy(history, d.energy, stab, mesh.tau_max)
                 if len(history) >= cfg.order - 1 else math.nan)
        mult = max(float(p.multiplier.max()) for p in rec.pieces) if rec.pieces else math.nan
        rows.append({
            "step": rec.n, "t": rec.t, "tau": rec.tau, "E": d.energy, "E_modified": e_mod,
            "S_H": rec.seminorms[0], "S_P": rec.seminorms[1], "max_multiplier": mult,
            "mass": d.mass, "h": d.height, "m": d.slope,
        })
    if write and rows:
        write_csv(Path(cfg.output_dir) / "step_debug.csv", list(rows[0]), [list(r.values()) for r in rows],
                  provenance_lines(cfg, stab))
    return rows
