"""Command-line entry point: run single stages or the whole pipeline.

Exit codes: 0 success, 2 missing input, 64 usage or config error,
70 internal failure.  Configuration comes from a JSON file plus flag
overrides; flags win.  The BACKEND_URL environment variable overrides
the config's backend, and --backend overrides both.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import traceback

from .errors import ConfigError, KbvqaError, MissingInputError
from .pipeline import (
    ALL_STAGES,
    PipelineConfig,
    PipelineContext,
    run_pipeline,
    run_stage,
)
from .reasoning import VISUAL_KINDS, VARIANTS

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="override every component seed")
    parser.add_argument("--force", action="store_true", help="re-run even if outputs are fresh")
    parser.add_argument("--backend", help="model backend URL (overrides BACKEND_URL)")
    parser.add_argument(
        "--visual", choices=VISUAL_KINDS, help="visual feature kind for reasoning"
    )
    parser.add_argument(
        "--variant", choices=sorted(VARIANTS), help="reasoning input variant"
    )
    parser.add_argument(
        "--format", choices=("table", "json"), help="evaluation output format"
    )
    parser.add_argument("--workdir", help="artifact directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="kbvqa", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", parents=[], help="run one pipeline stage")
    run.add_argument("stage_pos", nargs="?", metavar="STAGE", help="stage name")
    run.add_argument("--stage", dest="stage_flag", help="stage name")
    _add_common_flags(run)

    full = commands.add_parser("pipeline", help="run all stages in order")
    _add_common_flags(full)
    return parser


def _load_config(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    else:
        config = PipelineConfig()
    backend = args.backend or os.environ.get("BACKEND_URL") or config.backend
    config.backend = backend or None
    if args.seed is not None:
        config.set_seed(args.seed)
    if args.visual:
        config.reasoning = dataclasses.replace(config.reasoning, visual_kind=args.visual)
    if args.variant:
        config.variant = args.variant
    if args.format:
        config.output_format = args.format
    if args.workdir:
        config.workdir = args.workdir
    return config


def _resolve_stage(args, parser: _Parser) -> str:
    stage = args.stage_flag or args.stage_pos
    if not stage:
        parser.error("run requires a stage (positional or --stage)")
    if args.stage_flag and args.stage_pos and args.stage_flag != args.stage_pos:
        parser.error(
            f"conflicting stages {args.stage_pos!r} and --stage {args.stage_flag!r}"
        )
    if stage not in ALL_STAGES:
        parser.error(
            f"unknown stage {stage!r}; choose from {', '.join(ALL_STAGES)}"
        )
    return stage


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        stage = _resolve_stage(args, parser) if args.command == "run" else None
        config = _load_config(args)
        ctx = PipelineContext(config)
        if stage is not None:
            run_stage(ctx, stage, force=args.force)
        else:
            run_pipeline(ctx, force=args.force)
        return EXIT_OK
    except SystemExit as exc:
        return int(exc.code or 0)
    except MissingInputError as exc:
        print(f"kbvqa: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        print(f"kbvqa: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KbvqaError as exc:
        print(f"kbvqa: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
