"""Command-line interface.

    fdkin <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

Subcommands: simulate (CSV time series + final snapshot), equilibrium
(JSON fit report), positivity (JSON counterexample-scan report), kernel
(JSON angular-integrability report), oracle (JSON deterministic-vs-Monte
Carlo comparison).  Exit codes: 0 success, 1 configuration error, 2
numerical failure, 3 I/O error.  Identical config and seed produce
byte-identical outputs; FDKIN_THREADS is the fallback for --threads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .collision import eval_Q, mc_estimate_Q
from .config import (
    Config,
    build_grid_from,
    build_initial,
    build_kernel,
    build_quadrature,
    build_solver,
    parse_config,
)
from .equilibrium import (
    RegularEquilibrium,
    macroscopic,
    moment_residuals,
    solve_fermi_dirac,
)
from .errors import ConfigurationError, FdkinError, NumericalError
from .geometry import write_snapshot
from .kernels import angular_integrals
from .positivity import scan_counterexample
from .rng import SplitMix64, substream

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def _json_dump(obj, path: Path) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2)
    path.write_text(text + "\n")
    return text


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "infinite"
    return x


def cmd_simulate(cfg: Config, out: Path, seed: int) -> int:
    kernel = build_kernel(cfg)
    grid = build_grid_from(cfg)
    quad = build_quadrature(cfg, kernel)
    f0 = build_initial(cfg, grid)
    solver = build_solver(cfg, kernel, grid, quad)
    series, final = solver.run(
        f0, cfg.get_float("T"), output_every=cfg.get_int("output.every"),
        dense_until=cfg.get_float("output.dense_until"),
    )
    series.to_csv(out / "timeseries.csv")
    write_snapshot(final.f, out / "final_snapshot.txt")
    print(f"simulate: {len(series)} rows -> {out / 'timeseries.csv'}")
    return 0


def cmd_equilibrium(cfg: Config, out: Path, seed: int) -> int:
    grid = build_grid_from(cfg)
    f0 = build_initial(cfg, grid)
    m = macroscopic(f0)
    spec = solve_fermi_dirac(m, tol=cfg.get_float("equilibrium.saturation_tol"))
    res = moment_residuals(spec, m)
    if isinstance(spec, RegularEquilibrium):
        report = {
            "variant": "regular", "a": spec.a, "b": spec.b,
            "v0": list(spec.v0), "residuals": res,
        }
    else:
        report = {
            "variant": "saturated", "R": spec.radius,
            "v0": list(spec.v0), "residuals": res,
        }
    print(_json_dump(report, out / "equilibrium.json"))
    return 0


def cmd_positivity(cfg: Config, out: Path, seed: int) -> int:
    best, results = scan_counterexample(
        c=cfg.get_float("positivity.c"),
        gamma_exp=cfg.get_float("positivity.gamma"),
        lambdas=tuple(cfg.get_floats("positivity.lambdas")),
        beta_factors=tuple(cfg.get_floats("positivity.beta_factors")),
        sphere_order=cfg.get_int("positivity.sphere_order"),
    )
    chosen = best if best is not None else (results[0] if results else None)
    report = {
        "J0": chosen.j0 if chosen else None,
        "I_mantissa": chosen.mantissa if chosen else None,
        "I_exponent10": chosen.exponent10 if chosen else None,
        "I_error_mantissa": chosen.error_mantissa if chosen else None,
        "I_negative": bool(best is not None),
        "params": chosen.params if chosen else None,
        "cells_scanned": len(results),
    }
    print(_json_dump(report, out / "positivity.json"))
    return 0


def cmd_kernel(cfg: Config, out: Path, seed: int) -> int:
    kernel = build_kernel(cfg)
    try:
        rec = angular_integrals(kernel)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    report = {
        "family": kernel.family,
        "gamma": kernel.gamma,
        "i_sin": _jsonable(rec.i_sin),
        "i_sin2": _jsonable(rec.i_sin2),
        "satisfies_A2": rec.satisfies_a2,
        "satisfies_A3": rec.satisfies_a3,
    }
    print(_json_dump(report, out / "kernel.json"))
    return 0


def cmd_oracle(cfg: Config, out: Path, seed: int) -> int:
    kernel = build_kernel(cfg)
    grid = build_grid_from(cfg)
    quad = build_quadrature(cfg, kernel)
    f0 = build_initial(cfg, grid)
    q_det = eval_Q(f0, kernel, quad)
    n_nodes = cfg.get_int("oracle.nodes")
    n_samples = cfg.get_int("oracle.samples")
    rng = SplitMix64(substream(seed, "oracle-nodes"))
    rows = []
    agree = True
    for i in range(n_nodes):
        idx = tuple(int(rng.uniform() * grid.n) for _ in range(3))
        v = grid.node(*idx)
        est, err = mc_estimate_Q(f0, kernel, v, n_samples,
                                 substream(seed, f"oracle-mc-{i}"))
        det = float(q_det[idx])
        z = (det - est) / err if err > 0 else 0.0
        agree = agree and abs(z) <= 3.0
        rows.append({
            "node": list(idx), "v": [float(c) for c in v],
            "deterministic": det, "mc_estimate": est, "mc_stderr": err, "z": z,
        })
    report = {"samples": n_samples, "agree_3sigma": agree, "rows": rows}
    print(_json_dump(report, out / "oracle.json"))
    return 0 if agree else 2


_COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "positivity": cmd_positivity,
    "kernel": cmd_kernel,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fdkin", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (fallback: FDKIN_THREADS)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config))
        threads = args.threads
        if threads is None and os.environ.get("FDKIN_THREADS"):
            threads = int(os.environ["FDKIN_THREADS"])
        if threads:
            import numba

            numba.set_num_threads(max(1, threads))
        seed = args.seed if args.seed is not None else cfg.get_int("seed")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, seed)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FdkinError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
