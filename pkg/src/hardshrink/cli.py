"""Command line for the hardshrink solvers and benchmark harness.

Exit codes: 0 on success, 1 for configuration errors, 2 when every run failed.
"""
import argparse
import json
import logging
import os
import sys

from . import bench
from .algorithms import parse_algorithm
from .statgen import load_instance, save_instance

log = logging.getLogger("hardshrink")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _instance_dir(out, cell, trial):
    return os.path.join(out, f"cell{cell:03d}_trial{trial:04d}")


def cmd_gen(args):
    cfg = bench.load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for cell in range(len(cfg.grid_values)):
        for trial in range(cfg.trials_per_cell):
            inst = bench.instance_for(cfg, cell, trial)
            save_instance(inst, _instance_dir(args.out, cell, trial))
            count += 1
    log.info("wrote %d instances to %s", count, args.out)
    return EXIT_OK


def cmd_solve(args):
    try:
        parse_algorithm(args.algo)
    except ValueError as exc:
        raise bench.ConfigError(str(exc)) from None
    try:
        inst = load_instance(args.instance)
    except (OSError, KeyError, ValueError) as exc:
        raise bench.ConfigError(f"cannot load instance {args.instance}: {exc}") from None
    obj = bench.make_objective(inst)
    try:
        metrics = bench.solve_instance(inst, obj, args.algo, s=args.s, ell=args.l, eta=args.eta,
                                       max_iters=args.max_iters)
    except Exception as exc:  # noqa: BLE001 - reported, exit code 2
        log.error("solve failed: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    row = dict(scenario="single", algorithm=args.algo.lower(), grid_param="", grid_value=0.0,
               trial=0, **metrics, seed=inst.seed)
    json.dump(row, sys.stdout)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_bench(args):
    cfg = bench.load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    rows = bench.run_experiment(cfg, threads=args.threads)
    bench.emit(rows, "csv", os.path.join(args.out, "results.csv"))
    bench.emit_summary(bench.sweep_summary(rows), os.path.join(args.out, "summary.csv"))
    with open(os.path.join(args.out, "config.echo.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    errors = [r for r in rows if r.error is not None]
    if errors:
        bench.emit_errors(rows, os.path.join(args.out, "errors.csv"))
        log.warning("%d of %d runs failed; see errors.csv", len(errors), len(rows))
    if rows and len(errors) == len(rows):
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hardshrink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate and serialize the instances of a config")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one algorithm on a saved instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--algo", required=True)
    s.add_argument("--s", type=int, default=None, help="projected sparsity (rank for matrices)")
    s.add_argument("--l", type=int, default=None, help="expansion / partial thresholding level")
    s.add_argument("--eta", type=float, default=None, help="step size")
    s.add_argument("--max-iters", type=int, default=None)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a full sweep")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--threads", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except bench.ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
