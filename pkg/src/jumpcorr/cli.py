"""Command-line interface.

Subcommands map onto pipeline stage presets:

    spectrum   fluxonium spectrum sweep (and optional data fit)
    simulate   telegraph trajectories only
    filter     simulate + synthesize + filter + dwell
    analyze    everything through the covariance curve
    calibrate  detection-threshold calibration
    report     render figures from an existing run directory

Exit codes: 0 success, 2 validation error, 3 dependency error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    DependencyError,
    FileFormatError,
    InvalidInputError,
    JumpcorrError,
    NumericalError,
    UnresolvablePeaksError,
    ValidationError,
)

EXIT_VALIDATION = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERICAL = 4

COMMAND_STAGES = {
    "spectrum": ["spectrum"],
    "simulate": ["simulate"],
    "filter": ["simulate", "synthesize", "filter", "dwell"],
    "analyze": ["simulate", "synthesize", "filter", "dwell", "covariance"],
    "calibrate": ["calibrate"],
}


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--out", default=".", help="output directory (default: current)")
    sub.add_argument("--seed", type=int, default=None, help="override the configured master seed")
    sub.add_argument("--stages", default=None,
                     help="comma-separated stage list overriding the subcommand preset")
    sub.add_argument("--threads", type=int, default=None, help="worker threads for ensemble fan-out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpcorr",
        description="Simulate and analyze correlated relaxation of two monitored qubits.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, stages in COMMAND_STAGES.items():
        sub = subs.add_parser(name, help=f"run stages: {', '.join(stages)}")
        _add_common(sub)
    rep = subs.add_parser("report", help="render figures from a run directory")
    rep.add_argument("--out", required=True, help="run directory holding pipeline outputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            from .report import render_report

            for name in render_report(args.out):
                print(name)
            return 0

        from .pipeline import run_pipeline

        stages = args.stages if args.stages else COMMAND_STAGES[args.command]
        manifest = run_pipeline(args.config, stages=stages, out_dir=args.out,
                                seed=args.seed, threads=args.threads)
        for stage in manifest.stages:
            outputs = manifest.outputs.get(stage, [])
            print(f"{stage}: {len(outputs)} output(s), {manifest.timings_s[stage]:.2f}s")
        print("manifest.json")
        return 0
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (FileFormatError, InvalidInputError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, UnresolvablePeaksError, JumpcorrError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
