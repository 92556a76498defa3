"""Command line entry point: ``qpgl <subcommand> --config <path> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .lattice import StructuralError
from .potential import ConfigurationError, InvariantError
from .sweep import SUBCOMMANDS, apply_overrides, build_config, load_config_text, run

_SELFTEST_DEFAULT = {"structure": {"blocks": [2]}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpgl", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (dotted key, TOML value); repeatable")
    p.add_argument("--seed", type=int, help="64-bit seed for every stochastic task")
    p.add_argument("--workers", type=int, help="number of worker processes")
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is None:
            if args.subcommand != "selftest":
                parser.error("--config is required")
            raw = dict(_SELFTEST_DEFAULT)
        else:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                print(f"qpgl: cannot read config: {exc}", file=sys.stderr)
                return 2
            raw = load_config_text(text, str(args.config))
        raw = apply_overrides(raw, args.overrides)
        cfg = build_config(raw, args.subcommand, seed=args.seed, workers=args.workers, out=args.out)
    except (ConfigurationError, InvariantError, StructuralError) as exc:
        print(f"qpgl: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run(args.subcommand, cfg)
    except OSError as exc:
        print(f"qpgl: I/O error: {exc}", file=sys.stderr)
        return 3
    s = result.summary
    print(f"{args.subcommand}: {s['tasks']} tasks, {s['ok']} ok, {s['failed']} not ok")
    for key, value in s.items():
        if key not in ("tasks", "ok", "failed"):
            print(f"  {key}: {value}")
    for f in result.files:
        print(f"  wrote {f}")
    return 1 if result.errored else 0


if __name__ == "__main__":
    sys.exit(main())
