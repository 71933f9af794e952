"""Command-line interface.

Verbs: simulate (transport density A and emit the quantum mixture),
compare (transport densities A and B and emit trace distances), verify
(run an invariant suite) and dump-cloud (columnar particle dump).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import parse_config
from .errors import ConfigInvalid, SimulationError
from .runner import dump_cloud_rows, run_compare, run_simulate, write_cloud_dump, write_result
from .verification import SUITES, run_verify


def _add_common(parser):
    parser.add_argument("--config", required=True, help="scenario TOML file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--particles", type=int, default=None,
                        help="override the config particle count")


def _load_config(args):
    config = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.particles is not None:
        overrides["particles"] = args.particles
    if args.out is not None:
        overrides["output_directory"] = str(args.out)
    return replace(config, **overrides) if overrides else config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hqcsim",
        description="Liouville transport of hybrid classical-quantum ensembles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run density A and emit the quantum mixture")
    _add_common(p)

    p = sub.add_parser("compare", help="run densities A and B and emit trace distances")
    _add_common(p)

    p = sub.add_parser("verify", help="run an invariant verification suite")
    p.add_argument("--suite", default="all", choices=list(SUITES) + ["all"])
    p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("dump-cloud", help="write one CSV row per sampled particle")
    _add_common(p)
    p.add_argument("--density", default="a", choices=["a", "b"])
    p.add_argument("--time", type=float, default=0.0,
                   help="transport the cloud to this time before dumping")

    return parser


def _cmd_run(args, runner) -> int:
    config = _load_config(args)
    record = runner(config)
    paths = write_result(record, config.output_directory)
    for path in paths:
        print(f"wrote {path}")
    if record.compare is not None:
        peak = max((row["trace_distance"] for row in record.compare["distances"]),
                   default=0.0)
        print(f"initial distance {record.compare['initial_distance']:.4f}, "
              f"peak distance {peak:.4f} (band {record.compare['error_band']:.4f})")
    print(f"{record.steps_total} integration steps in {record.wall_clock_s:.2f} s")
    return 0


def _cmd_verify(args) -> int:
    report = run_verify(args.suite)
    for suite, checks in report["suites"].items():
        for check in checks:
            print(f"[{'PASS' if check['verdict'] == 'pass' else 'FAIL'}] "
                  f"{suite}.{check['name']}: measured {check['measured']:.3e} "
                  f"{check['comparator']} bound {check['bound']:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "verify_report.json"
        path.write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    print("overall:", "PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


def _cmd_dump(args) -> int:
    config = _load_config(args)
    header, rows = dump_cloud_rows(config, which=args.density, at_time=args.time)
    out_dir = Path(config.output_directory)
    path = write_cloud_dump(header, rows, out_dir / f"cloud_{args.density}.csv")
    print(f"wrote {path} ({rows.shape[0]} particles)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_run(args, run_simulate)
        if args.command == "compare":
            return _cmd_run(args, run_compare)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "dump-cloud":
            return _cmd_dump(args)
    except ConfigInvalid as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
