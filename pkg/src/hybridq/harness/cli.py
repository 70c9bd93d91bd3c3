"""Command-line entry point.

Exit codes: 0 success, 1 failed checks, 2 invalid scenario or usage,
3 a run that failed while integrating. Errors are written to stderr as
a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .checks import SUITES, run_suite
from .config import ConfigError, parse_scenario
from .runner import RunError, run, write_outputs
from .schema import KINDS

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2, 3


def _error(payload: dict, code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError("UNREADABLE_FILE", str(exc)) from None
    return parse_scenario(text)


def _simulate(args, require_sweep: bool) -> int:
    try:
        scenario = _load(args.file)
    except ConfigError as exc:
        return _error({"error": exc.as_dict(), "file": args.file}, EXIT_CONFIG)
    if require_sweep and scenario.sweep is None:
        return _error({"error": {"error": "NO_SWEEP",
                                 "message": "scenario has no [sweep] section"},
                       "file": args.file}, EXIT_CONFIG)
    try:
        report = run(scenario, threads=args.threads, seed=args.seed)
    except RunError as exc:
        return _error({"error": exc.as_dict(), "file": args.file}, EXIT_RUN)
    csv_path, json_path = write_outputs(report, args.out_dir)
    print(f"wrote {csv_path} ({len(report.rows)} rows) and {json_path}")
    return EXIT_OK


def _check(args) -> int:
    if args.suite not in SUITES + ("all",):
        return _error({"error": {"error": "UNKNOWN_SUITE", "message": args.suite,
                                 "choices": list(SUITES) + ["all"]}}, EXIT_CONFIG)
    t0 = time.perf_counter()
    results = run_suite(args.suite, args.tolerance_scale)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed in {time.perf_counter() - t0:.1f} s")
    return EXIT_CHECK if failed else EXIT_OK


def _explain(args) -> int:
    if args.kind not in KINDS:
        return _error({"error": {"error": "UNKNOWN_KIND", "message": args.kind,
                                 "choices": sorted(KINDS)}}, EXIT_CONFIG)
    print(KINDS[args.kind].explain())
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    common.add_argument("--out-dir", default=".", help="directory for CSV and JSON output")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker threads for sweep points")
    common.add_argument("--tolerance-scale", type=_positive_float, default=1.0,
                        help="multiply check tolerances by this factor")

    parser = argparse.ArgumentParser(prog="hybridq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("simulate", parents=[common], help="run one scenario file")
    p.add_argument("file")
    p = sub.add_parser("sweep", parents=[common], help="run a scenario with a [sweep] section")
    p.add_argument("file")
    p = sub.add_parser("check", parents=[common], help="run an invariant suite")
    p.add_argument("suite", help=", ".join(SUITES + ("all",)))
    p = sub.add_parser("explain", parents=[common], help="print the parameter schema of a kind")
    p.add_argument("kind")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "simulate":
        return _simulate(args, require_sweep=False)
    if args.verb == "sweep":
        return _simulate(args, require_sweep=True)
    if args.verb == "check":
        return _check(args)
    return _explain(args)


if __name__ == "__main__":
    sys.exit(main())
