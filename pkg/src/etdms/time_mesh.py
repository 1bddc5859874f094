"""Time meshes: uniform, randomly perturbed, refined, and step-ratio checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeMesh:
    nodes: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("mesh must start at t=0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def tau_max(self) -> float:
        return float(self.steps.max())

    @property
    def final_time(self) -> float:
        return float(self.nodes[-1])

    def __len__(self) -> int:
        return self.nodes.size - 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# seed: {self.seed}\n")
            w = csv.writer(fh)
            w.writerow(["index", "t"])
            for i, t in enumerate(self.nodes):
                w.writerow([i, repr(float(t))])

    @classmethod
    def from_csv(cls, path) -> TimeMesh:
        seed = None
        nodes = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("# seed:"):
                    val = line.split(":", 1)[1].strip()
                    seed = None if val == "None" else int(val)
                elif line.startswith("#") or line.startswith("index"):
                    continue
                elif line.strip():
                    nodes.append(float(line.split(",")[1]))
        return cls(np.array(nodes), seed)


def uniform(dt: float, T: float) -> TimeMesh:
    return TimeMesh(perturbed_uniform(dt, T, 0.0).nodes)


def perturbed_uniform(dt0: float, T: float, amplitude: float = 0.1, seed: int = 0) -> TimeMesh:
    """Uniform nodes ``j*dt0`` moved by ``amplitude*dt0*eta_j``, ``eta_j ~ U[-1, 1]``.

    End points stay fixed. Steps lie in ``dt0*[1 - 2a, 1 + 2a]``. The
    generator is numpy's PCG64 seeded with ``seed``.
    """
    if not dt0 > 0:
        raise ValueError("dt0 must be positive")
    if not T > dt0:
        raise ValueError("T must exceed dt0")
    if not 0 <= amplitude < 0.5:
        raise ValueError(f"amplitude must be in [0, 0.5), got {amplitude}")
    n = int(np.ceil(T / dt0 - 1e-9))
    nodes = np.arange(n + 1) * dt0
    nodes[-1] = T
    rng = np.random.Generator(np.random.PCG64(seed))
    eta = rng.uniform(-1.0, 1.0, size=n - 1)
    nodes[1:-1] += amplitude * dt0 * eta
    if nodes[-1] - nodes[-2] <= 0:
        raise ValueError("final step collapsed; choose T as a multiple of dt0")
    return TimeMesh(nodes, seed)


def refine(mesh: TimeMesh) -> TimeMesh:
    """Double the node count: coarse nodes kept, a midpoint inserted in every step."""
    coarse = mesh.nodes
    fine = np.empty(2 * coarse.size - 1)
    fine[::2] = coarse
    fine[1::2] = 0.5 * (coarse[:-1] + coarse[1:])
    return TimeMesh(fine, mesh.seed)


RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class RatioCheck:
    ok: bool
    worst_pair: tuple[int, int] | None
    worst_ratio: float

    def __bool__(self) -> bool:
        return self.ok


def max_window_ratio(steps, k: int) -> tuple[float, tuple[int, int] | None]:
    steps = np.asarray(steps, dtype=float)
    worst, pair = 1.0, None
    for lag in range(1, k):
        if steps.size <= lag:
            break
        a, b = steps[lag:], steps[:-lag]
        for num, den, order in ((a, b, (lag, 0)), (b, a, (0, lag))):
            r = num / den
            i = int(np.argmax(r))
            if r[i] > worst:
                worst = float(r[i])
                pair = (i + order[0], i + order[1])
    return worst, pair


def validate_ratio(mesh_or_steps, k: int, r_c: float) -> RatioCheck:
    """Check ``tau_n / tau_m <= r_c`` for ``|n - m| < k``.

    A relative slack of 1e-12 absorbs roundoff in node differences.
    """
    steps = mesh_or_steps.steps if isinstance(mesh_or_steps, TimeMesh) else mesh_or_steps
    worst, pair = max_window_ratio(steps, k)
    return RatioCheck(worst <= r_c * (1 + RATIO_SLACK), pair, worst)

