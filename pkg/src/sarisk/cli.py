"""Command-line entry points.

``sarisk run --config cfg.json [--seed S] [--workers W] [--output path]``
executes a configured table run and writes the summary CSV;
``sarisk oracle --model ID --alpha A`` prints reference values (analytic
where available, otherwise a large-sample empirical estimate).

Exit codes: 0 success, 2 configuration error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .driver import ConfigError, parse_config, run_table
from .loss_models import MODEL_BUILDERS, GbmSpec, build_model
from .oracle import analytic_put_var_cvar, empirical_quantile
from .sa_engine import NumericAbortError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cmd_run(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    if args.output is not None:
        config = replace(config, output=args.output)
    if args.detail is not None:
        config = replace(config, detail_output=args.detail)
    try:
        summary, detail = run_table(config)
    except NumericAbortError as exc:
        print(f"numeric abort: {exc} [model={config.model} seed={config.seed}]",
              file=sys.stderr)
        return EXIT_NUMERIC
    if config.output:
        with open(config.output, "w", encoding="utf-8") as fh:
            fh.write(summary)
    else:
        sys.stdout.write(summary)
    if config.detail_output:
        with open(config.detail_output, "w", encoding="utf-8") as fh:
            fh.write(detail)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.model not in MODEL_BUILDERS:
        print(f"config error: unknown model {args.model!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not 0.0 < args.alpha < 1.0:
        print("config error: alpha must be in (0, 1)", file=sys.stderr)
        return EXIT_CONFIG
    model = build_model(args.model)
    if args.model == "short_put":
        var, cvar = analytic_put_var_cvar(GbmSpec(), args.alpha)
        print(f"analytic: var={var:.6f} cvar={cvar:.6f}")
    rng = np.random.default_rng(args.seed)
    losses = model.loss_batch(model.sample_base_batch(rng, args.samples))
    var_e = empirical_quantile(losses, args.alpha)
    tail = losses[losses >= var_e]
    print(f"empirical (n={args.samples}): var={var_e:.6f} cvar={float(tail.mean()):.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sarisk",
                                     description="Recursive VaR/CVaR estimation "
                                                 "with adaptive importance sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured table run")
    p_run.add_argument("--config", required=True, help="path to the JSON run configuration")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--workers", type=int, default=None,
                       help="override the replication worker count")
    p_run.add_argument("--output", default=None, help="summary CSV path (default stdout)")
    p_run.add_argument("--detail", default=None, help="optional per-replication CSV path")

    p_or = sub.add_parser("oracle", help="print reference VaR/CVaR values")
    p_or.add_argument("--model", required=True, help="model id")
    p_or.add_argument("--alpha", type=float, required=True, help="confidence level")
    p_or.add_argument("--samples", type=int, default=2_000_000,
                      help="sample size for the empirical reference")
    p_or.add_argument("--seed", type=int, default=20090401, help="sampling seed")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_oracle(args)


if __name__ == "__main__":
    sys.exit(main())
