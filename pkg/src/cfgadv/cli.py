"""``cfgadv`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 2 usage or config error, 3 data error (including a
missing upstream artifact), 4 invariant violation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, parse_config


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value config file with [sections]")
    p.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    p.add_argument("--out", default="out", metavar="DIR", help="artifact directory (default: out)")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker cap (default: 1)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfgadv", description="CFG malware classifier adversarial pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {pipeline.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-corpus": "generate the synthetic labeled CFG corpus",
        "extract": "compute the 23 graph features for every corpus graph",
        "train": "split, normalise, train and evaluate the classifier",
        "attack-osaa": "run the six feature-space attacks on test malware",
        "attack-gea": "run graph embedding attacks with min/median/max targets",
        "density-sweep": "GEA with increasingly dense targets at fixed node count",
        "report": "aggregate results into report tables",
        "all": "run every stage in order",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name in ("report", "all"):
            p.add_argument("--no-timing", action="store_true",
                           help="omit wall-clock CT columns (for reproducible tables)")
    return parser


def load_config(args) -> RunConfig:
    text = ""
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text()
    cfg = parse_config(text, args.set)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"cfgadv: config error: {exc}", file=sys.stderr)
        return pipeline.EXIT_USAGE

    out = Path(args.out)
    try:
        if args.command == "report":
            print(pipeline.report(out, cfg, args.config, timing=not args.no_timing))
        elif args.command == "all":
            print(pipeline.run_all(out, cfg, args.config, args.threads, timing=not args.no_timing))
        elif args.command in ("extract", "attack-osaa"):
            pipeline.STAGES[args.command](out, cfg, args.config, threads=args.threads)
        else:
            pipeline.STAGES[args.command](out, cfg, args.config)
    except pipeline.PipelineError as exc:
        print(f"cfgadv {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return pipeline.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
