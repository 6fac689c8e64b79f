"""Command line entry point.

    ebgkit <subcommand> [--scenario PATH] [--out DIR] [--seed N]

Subcommands: ``bounds``, ``jacobi-lab``, ``series``, ``asymptotics``, ``verify``.
Without ``--scenario`` the built-in default scenario is used.  Exit status is
1 when a proved check fails, 2 for configuration errors, 0 otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebgkit",
                                     description="Volume bounds for geodesic balls.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bounds": "volume, eBG, BG and scalar-model curves plus gap checks",
        "jacobi-lab": "randomised Jacobi comparison suites",
        "series": "exact small-ball series and fitted coefficients",
        "asymptotics": "large-radius decay of eBG/BG",
        "verify": "run every check and write report.json",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", type=Path, default=None,
                       help="scenario JSON (default: built-in scenario)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")
        if name in ("verify", "jacobi-lab"):
            p.add_argument("--inject-reversed-pair", action="store_true",
                           help="test mode: feed an unordered pair to the monotonicity check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.scenario is None:
            scenario = runner.default_scenario(seed=args.seed)
        else:
            scenario = runner.load_scenario(args.scenario, seed=args.seed)
        out = args.out if args.out is not None else Path(scenario.outputs)
        inject = getattr(args, "inject_reversed_pair", False)
        if args.command == "verify":
            report = runner.run_verify(scenario, out, inject_reversed=inject)
        else:
            fn = {"bounds": runner.run_bounds, "series": runner.run_series,
                  "asymptotics": runner.run_asymptotics}.get(args.command)
            if fn is None:
                runner._ensure_dir(out)
                report = runner.run_jacobi_lab(scenario, out, inject_reversed=inject)
            else:
                report = fn(scenario, out)
            report.write(out, scenario)
    except runner.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for name in report.failed:
        print(f"FAIL {name}", file=sys.stderr)
    print(f"{len(report.entries)} checks, {len(report.failed)} failed; "
          f"report at {Path(out) / 'report.json'}")
    return EXIT_FAILED if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
