"""Command line: ``spinbath run <mode> --config <path|preset> [--samples M] [--seed S] [--out DIR]``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, harness
from .config import MODES, ConfigError, load_config

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="spinbath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("mode", choices=MODES)
    run.add_argument("--config", required=True, help="config file or preset name (fig1, fig2, fig3)")
    run.add_argument("--samples", type=int, help="override n_samples")
    run.add_argument("--seed", type=int, help="override seed")
    run.add_argument("--workers", type=int, help="override workers")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    plot = sub.add_parser("plot-script", help="write a matplotlib script for CSV outputs")
    plot.add_argument("--numeric")
    plot.add_argument("--analytic")
    plot.add_argument("--element", default="22")
    plot.add_argument("--out", default="plot.py")
    return parser


def _run(args):
    cfg = load_config(args.config)
    overrides = {"mode": args.mode}
    for key, value in (("n_samples", args.samples), ("seed", args.seed), ("workers", args.workers)):
        if value is not None:
            overrides[key] = value
    cfg = cfg.replace(**overrides)
    runner = {
        "simulate": harness.run_simulate,
        "analytic": harness.run_analytic,
        "compare": harness.run_compare,
        "sampler-check": harness.run_sampler_check,
        "oracle-check": harness.run_oracle_check,
    }[args.mode]
    result = runner(cfg, args.out)
    if args.mode == "compare":
        print(harness.format_report(result[2]), end="")
    else:
        summary = result[1] if isinstance(result, tuple) else result
        print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"outputs written to {args.out}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            _run(args)
        else:
            path = harness.emit_plot_script(args.out, args.numeric, args.analytic, args.element)
            print(f"wrote {path}")
    except (ConfigError, harness.HarnessError) as exc:
        # harness errors raised before any work starts are input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure inside a run maps to exit code 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
