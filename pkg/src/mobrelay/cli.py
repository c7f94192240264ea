"""Command-line front-end for the experiment runner.

Exit codes: 0 success, 1 configuration error, 2 solver failure in any sweep
row, 3 output I/O error.
"""

import argparse
import sys
from pathlib import Path

from .errors import MobrelayError
from .harness import MODES, ExperimentSpec, run
from .scenario import load_config


def _float_list(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="scenario key-value file")
    p.add_argument("--out", default=None, help="output directory for CSV artifacts")
    p.add_argument("--preset", default=None,
                   help="fixed/initial trajectory preset (forward-max-speed, "
                        "reverse-max-speed, cyclic, straight-line)")
    p.add_argument("--t", default=None, type=_float_list, metavar="LIST",
                   help="comma-separated horizon sweep values in seconds")
    p.add_argument("--pbar-dbm", default=None, type=_float_list, metavar="LIST",
                   help="comma-separated average-power sweep values in dBm")
    p.add_argument("--tol", default=1e-4, type=float,
                   help="relative convergence tolerance for iterative modes")
    p.add_argument("--max-iters", default=50, type=int,
                   help="iteration cap for iterative modes")
    p.add_argument("--d1", default=100.0, type=float,
                   help="ferry loading range from the source (m)")
    p.add_argument("--d2", default=100.0, type=float,
                   help="ferry unloading range from the destination (m)")
    p.add_argument("--workers", default=1, type=int,
                   help="thread-pool size for sweep points")
    p.add_argument("--emit-plots", action="store_true",
                   help="also write a gnuplot script for the artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobrelay",
        description="Throughput-optimal schedules and trajectories for a "
                    "buffer-aided mobile relay")
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "power": "optimal powers on a fixed trajectory preset",
        "traj": "optimize the trajectory with fixed uniform powers",
        "joint": "alternate power and trajectory optimization",
        "free": "closed-form solution with free endpoints",
        "baseline": "static midpoint relay baseline",
        "ferry": "load-carry-unload ferrying baseline",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=descriptions[mode])
        _add_common(p)
        p.set_defaults(mode=mode)
    p = sub.add_parser("sweep", help="sweep any mode over horizons or powers")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=MODES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        spec = ExperimentSpec(
            scenario=cfg,
            mode=args.mode,
            sweep_horizons=args.t,
            sweep_powers_dbm=args.pbar_dbm,
            preset=args.preset,
            out_dir=Path(args.out) if args.out else None,
            ferry_load_range=args.d1,
            ferry_unload_range=args.d2,
            rel_tol=args.tol,
            max_iters=args.max_iters,
            emit_plots=args.emit_plots,
            workers=args.workers,
        )
    except (MobrelayError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        rows = run(spec)
    except IOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    for row in rows:
        print(f"{row.label:>14s}  mode={row.mode:8s} throughput_sum={row.throughput_sum:.6f} "
              f"per_slot={row.throughput_per_slot:.6f} status={row.status}")
    if any(row.status != "ok" for row in rows):
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
