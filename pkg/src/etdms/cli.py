"""Command line entry point: ``etdms {converge,coarsen,adaptive,step-debug}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .harness import (
    ConfigError,
    ExperimentConfig,
    run_adaptive_comparison,
    run_coarsening,
    run_convergence,
    run_step_debug,
)

# Per-subcommand defaults; a --config file overrides these.
DEFAULTS = {
    "converge": {},
    "coarsen": {
        "n_points": 64, "epsilon": 0.005, "dt0": 0.01, "T": 50.0,
        "initial": "sin_cos_noise", "energy_fit_start": 10.0, "power_fit_start": 5.0,
    },
    "adaptive": {"n_points": 64, "epsilon": 0.005, "T": 100.0, "initial": "sin_cos_noise"},
    "step-debug": {"n_points": 32, "epsilon": 0.005, "dt0": 0.01, "initial": "sin_cos_noise"},
}


def load_config(kind: str, path: str | None, output: str | None, seed: int | None) -> ExperimentConfig:
    data = dict(DEFAULTS[kind])
    if path:
        with open(path) as fh:
            data.update(json.load(fh))
    data["kind"] = kind
    cfg = ExperimentConfig.from_dict(data)
    if output is not None:
        cfg = replace(cfg, output_dir=output)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etdms", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in DEFAULTS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.kind, args.config, args.output, args.seed)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"etdms: config error: {exc}", file=sys.stderr)
        return 2

    if cfg.kind == "converge":
        rows = run_convergence(cfg)
        print(f"{'N_T':>4} {'err_unif':>11} {'rate':>6} {'err_pert':>11} {'rate':>6}")
        for r in rows:
            ru = "" if r.rate_uniform is None else f"{r.rate_uniform:.3f}"
            rp = "" if r.rate_perturbed is None else f"{r.rate_perturbed:.3f}"
            print(f"{r.n_t:>4} {r.error_uniform:>11.4e} {ru:>6} {r.error_perturbed:>11.4e} {rp:>6}")
    elif cfg.kind == "coarsen":
        res = run_coarsening(cfg)
        for name, fit in res.fits.items():
            print(f"{name}: a={fit.a:.4g} b={fit.b:.4g} window={fit.window} n={fit.points}")
        print(f"A={res.stab.a_stab:.6g} steps={len(res.steps)}")
    elif cfg.kind == "adaptive":
        res = run_adaptive_comparison(cfg)
        print(f"steps: large={res.steps_large} adaptive={res.steps_adaptive} small={res.steps_small}")
        print(f"L2 distance to small-step run: adaptive={res.distance_adaptive:.4e} "
              f"large={res.distance_large:.4e}")
    else:
        for row in run_step_debug(cfg):
            print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"output written to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
