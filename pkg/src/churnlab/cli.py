"""``churnlab <subcommand> --config <path> [--out DIR] [--seed N] [--threads N]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from churnlab.config import load_config
from churnlab.errors import ChurnLabError
from churnlab.stages import STAGES, StageError, run_pipeline, run_stages

EXIT_OK = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="churnlab", description="Churn analytics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        p = sub.add_parser(name, help="all stages in order" if name == "run" else f"the {name} stage")
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
        p.add_argument("--threads", type=int, help="worker cap; never changes outputs")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "out_dir": str(Path(args.out).resolve()) if args.out else None,
        "seed": args.seed,
        "threads": args.threads,
    }
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            run_pipeline(cfg)
        else:
            run_stages(cfg, [args.command])
    except StageError as exc:
        print(f"churnlab: error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return exc.exit_code
    except ChurnLabError as exc:
        print(f"churnlab: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"churnlab: {args.command} finished; outputs in {cfg.out_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
