"""Command-line entry point ``pftsim``."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import ConfigError
from .runner import (
    EXPERIMENTS,
    check_all,
    default_config,
    list_experiments,
    load_config,
    parse_config,
    run,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pftsim", description="Relational scalar-field experiments.")
    parser.add_argument("--version", action="version", version=f"pftsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("experiment", choices=list(EXPERIMENTS))
    p_run.add_argument("--config", help="JSON configuration file (defaults if omitted)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--threads", type=int, help="worker threads (else $PFTSIM_THREADS, else 1)")
    p_run.add_argument("--quick", action="store_true", help="use the reduced built-in configuration")

    p_check = sub.add_parser("check", help="run every experiment and write summary.json")
    p_check.add_argument("--out", help="output directory")
    p_check.add_argument("--threads", type=int)
    p_check.add_argument("--quick", action="store_true",
                         help="reduced sizes and looser tolerances (smoke test only)")

    p_list = sub.add_parser("list-experiments", help="list experiments")
    p_list.add_argument("--json", action="store_true", help="machine-readable listing")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-experiments":
            items = list_experiments()
            if args.json:
                print(json.dumps([{"name": n, "description": d} for n, d in items], indent=2))
            else:
                width = max(len(n) for n, _ in items)
                for n, d in items:
                    print(f"{n.ljust(width)}  {d}")
            return EXIT_PASS
        if args.command == "check":
            code, summary = check_all(out_dir=args.out, threads=args.threads, quick=args.quick)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return code
        if args.config:
            cfg = load_config(args.config, args.experiment)
        else:
            cfg = parse_config(default_config(args.experiment, quick=args.quick))
        res = run(cfg, out_dir=args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in res.manifest.checks:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark} {c['name']}: {c['value']:.6g} {c['relation']} {c['threshold']:.6g}")
    if res.manifest.error:
        print(f"error: {res.manifest.error}", file=sys.stderr)
    print(f"{cfg.experiment}: {res.manifest.status}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
