"""Command line entry point: ``covnet run|validate|plots|gen-targets``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, CovnetError, DivergenceError
from .scenario import (PLOT_KINDS, SimConfig, ValidationFailure, default_config_json,
                       emit_plot_data, run_scenario, validate_only)
from .targets import SHAPES, generate_shape, save_targets

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="covnet", description="Decentralized coverage network simulator")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd")

    r = sub.add_parser("run", help="plan, simulate and write a run directory")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="override the config seed")

    v = sub.add_parser("validate", help="check assumptions and stability only")
    v.add_argument("--config", required=True)

    pl = sub.add_parser("plots", help="emit per-figure CSV series for a finished run")
    pl.add_argument("--run", required=True, help="run directory")
    pl.add_argument("--which", required=True, choices=PLOT_KINDS)

    g = sub.add_parser("gen-targets", help="write a target CSV for a built-in shape")
    g.add_argument("--shape", required=True, choices=SHAPES + ("multicircle",))
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    return p


def _load(path, seed=None):
    cfg = SimConfig.load(path)
    if seed is not None:
        cfg.data["seed"] = seed
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        print(default_config_json())
        return EXIT_OK
    if args.cmd is None:
        _parser().print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        if args.cmd == "run":
            out = run_scenario(_load(args.config, args.seed), args.out)
            m = out.metrics
            print(f"wrote {out.out_dir}")
            print(f"final max position error {m['final_max_position_error']:.3e}, "
                  f"final max weight error {m['final_max_weight_error']:.3e}, "
                  f"max settle time {m['max_settle_time']}")
        elif args.cmd == "validate":
            rep = validate_only(_load(args.config))
            print(rep.to_json())
            return EXIT_OK if rep.passed else EXIT_INVALID
        elif args.cmd == "plots":
            for path in emit_plot_data(args.run, args.which):
                print(path)
        else:
            ts = generate_shape(args.shape, args.count, seed=args.seed)
            save_targets(ts, args.out)
            print(f"wrote {ts.n_d} targets to {args.out}")
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(exc.report.to_json(), file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        print(f"diverged: {exc} (partial logs written)", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, CovnetError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
