"""Command-line entry point: ``wwlab {flowmap,mollifier,dn,simulate,report} CONFIG``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from ..errors import BlowUpError, ConfigError, DiffeomorphismError, TaylorSignError
from .config import SCENARIOS, load_config
from .experiments import run
from .report import EXIT_CONFIG, EXIT_RUNTIME, emit_report, load_result

log = logging.getLogger("wwlab.expcli")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wwlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("config", help="experiment config file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    rp = sub.add_parser("report", help="re-emit tables, plots and verdict from a run directory")
    rp.add_argument("config", help="run directory containing summary.json")
    rp.add_argument("--out", help="write the report here instead of in place")
    rp.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    rp.add_argument("--threads", type=int, default=1, help=argparse.SUPPRESS)
    rp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        try:
            res = load_result(args.config)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read run directory {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        code = emit_report(res, args.out or args.config)
        print(f"{res.scenario}: {'PASS' if code == 0 else 'FAIL'}")
        return code

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.scenario != args.command:
        print(f"config error: config declares scenario {cfg.scenario!r}, "
              f"command is {args.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {cfg.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        res = run(cfg, threads=args.threads, workdir=cfg.out)
    except (TaylorSignError, BlowUpError, DiffeomorphismError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    code = emit_report(res, cfg.out)
    for name in sorted(res.checks):
        c = res.checks[name]
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}: {c['value']:.6g} {c['op']} "
              f"{c['threshold']:.6g}")
    print(f"{cfg.scenario}: {'PASS' if code == 0 else 'FAIL'} -> {cfg.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
