"""Command-line entry point.

Subcommands: ``run`` (mode taken from the config), ``compare``,
``error-estimate``, ``presets`` and ``validate``.  Exit codes: 0 on success,
2 for configuration errors, 3 for runtime aborts (for example a member state
annihilated by a too-coarse time step).
"""

from __future__ import annotations

import argparse
import os
import sys

from wavemc.config import ConfigError, config_hash, parse_config
from wavemc.engine import compare_shared_noise, estimate_error, run
from wavemc.models import PRESETS
from wavemc.output import write_comparison, write_error_report, write_plot_data, write_trajectory
from wavemc.steppers import AnnihilationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnnihilationError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavemc", description=__doc__)
    sub = parser.add_subparsers(required=True)

    def add_common(p, out_required=True):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=out_required, help="output CSV path")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads (default: all cores)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_run = sub.add_parser("run", help="execute the run in the config's mode")
    add_common(p_run)
    p_run.add_argument("--plot-data", default=None, help="also write a downsampled series to this path")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="Monte Carlo vs direct integration on shared noise")
    add_common(p_cmp)
    p_cmp.add_argument("--refine", action="store_true", help="repeat the comparison at dt/2 on the same noise path")
    p_cmp.set_defaults(func=_cmd_compare)

    p_err = sub.add_parser("error-estimate", help="replicate runs with shared measurement noise")
    add_common(p_err)
    p_err.add_argument("--replicates", type=int, default=None, help="number of replicates (default from config, else 2)")
    p_err.set_defaults(func=_cmd_error)

    p_presets = sub.add_parser("presets", help="list model presets")
    p_presets.set_defaults(func=_cmd_presets)

    p_val = sub.add_parser("validate", help="parse and validate a config, printing its hash")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    return parser


def _load(args):
    config = parse_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
        config.seed = args.seed
        config.config_hash = config_hash(config)
    return config


def _cmd_run(args) -> int:
    config = _load(args)
    if config.mode == "compare":
        write_comparison(compare_shared_noise(config, workers=args.workers), args.out)
    elif config.mode == "error-estimate":
        write_error_report(estimate_error(config, workers=args.workers), args.out)
    else:
        rec = run(config, workers=args.workers)
        write_trajectory(rec, args.out)
        if args.plot_data:
            write_plot_data(rec, args.plot_data)
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = _load(args)
    config.mode = "compare"
    if args.refine:
        config.refine = True
    config.config_hash = config_hash(config)
    write_comparison(compare_shared_noise(config, workers=args.workers), args.out)
    return EXIT_OK


def _cmd_error(args) -> int:
    config = _load(args)
    config.mode = "error-estimate"
    config.config_hash = config_hash(config)
    report = estimate_error(config, replicates=args.replicates, workers=args.workers)
    write_error_report(report, args.out)
    return EXIT_OK


def _cmd_presets(args) -> int:
    for name, (_, defaults) in sorted(PRESETS.items()):
        params = ", ".join(f"{key}={value!r}" for key, value in defaults.items())
        print(f"{name}  ({params})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = parse_config(args.config)
    print(f"OK  mode={config.mode}  n_steps={config.n_steps}  hash={config.config_hash}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
