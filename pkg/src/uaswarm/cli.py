"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
unknown suite.  Every flag can also be given through an environment
variable named ``UASWARM_<FLAG>`` (for example ``UASWARM_SEED``); flags win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback

from .exceptions import ScenarioValidationError
from .sim import SCHEMA_VERSION, SUITES, load_scenario, run, run_suite, write_run

ENV_PREFIX = "UASWARM_"


def _env(name, default=None, cast=str):
    v = os.environ.get(ENV_PREFIX + name.upper())
    return default if v is None else cast(v)


def build_parser():
    p = argparse.ArgumentParser(
        prog="uaswarm",
        description=f"Multi-agent planning and frame-alignment simulator "
                    f"(scenario schema version {SCHEMA_VERSION}).",
        epilog="Scenario files are JSON; see the README for the schema.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("--scenario", default=_env("scenario"), help="scenario JSON path")
    r.add_argument("--seed", type=int, default=_env("seed", None, int), help="override the seed")
    r.add_argument("--out", default=_env("out", "out"), help="output directory")

    s = sub.add_parser("suite", help="run a benchmark suite")
    s.add_argument("--suite", default=_env("suite"), help="one of: " + ", ".join(SUITES))
    s.add_argument("--seed", type=int, default=_env("seed", 0, int), help="first seed")
    s.add_argument("--repeats", type=int, default=_env("repeats", 1, int),
                   help="seeds per case (seed, seed+1, ...)")
    s.add_argument("--jobs", type=int, default=_env("jobs", 1, int), help="parallel workers")
    s.add_argument("--out", default=_env("out", "out"), help="output directory")

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("--scenario", default=_env("scenario"), help="scenario JSON path")
    return p


def _fail_config(errors):
    for e in errors:
        print(f"invalid scenario: {e}", file=sys.stderr)
    return 2


def cmd_run(args):
    if not args.scenario:
        return _fail_config(["--scenario is required"])
    try:
        sc = load_scenario(args.scenario)
    except ScenarioValidationError as exc:
        return _fail_config(exc.errors)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    try:
        out = write_run(run(sc), args.out)
    except Exception as exc:
        logging.debug(traceback.format_exc())
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def cmd_suite(args):
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return 2
    if args.repeats < 1 or args.jobs < 1:
        print("--repeats and --jobs must be >= 1", file=sys.stderr)
        return 2
    seeds = tuple(range(args.seed, args.seed + args.repeats))
    try:
        run_suite(args.suite, seeds=seeds, jobs=args.jobs, out_dir=args.out)
    except Exception as exc:
        logging.debug(traceback.format_exc())
        print(f"suite failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {os.path.join(args.out, args.suite + '.csv')}")
    return 0


def cmd_validate(args):
    if not args.scenario:
        return _fail_config(["--scenario is required"])
    try:
        sc = load_scenario(args.scenario)
    except ScenarioValidationError as exc:
        return _fail_config(exc.errors)
    print(f"ok: {sc.name} ({len(sc.agents)} agents, schema v{sc.schema_version})")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return {"run": cmd_run, "suite": cmd_suite, "validate": cmd_validate}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
