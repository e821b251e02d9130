"""``tutorsim`` command line: generate, validate, report, export-responses.

Exit codes: 0 success, 1 configuration error, 2 too many per-item failures,
3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, CorpusError, TutorsimError
from .pipeline import generate, validate
from .report import ReportError, build_report, export_responses

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("tutorsim")


def _stage_exit(summary, max_rate: float, stage: str) -> int:
    print(
        f"{stage}: attempted {summary.attempted}, written {summary.written}, "
        f"skipped {summary.skipped}, failed {summary.failed}"
    )
    if summary.failure_rate() > max_rate:
        print(f"{stage}: failure rate {summary.failure_rate():.1%} exceeds {max_rate:.0%}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    summary = generate(cfg)
    print(f"run directory: {cfg.resolved_run_dir()}")
    return _stage_exit(summary, cfg.max_failure_rate, "generate")


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.run) if args.run else cfg.resolved_run_dir()
    summary = validate(cfg, run_dir)
    return _stage_exit(summary, cfg.max_failure_rate, "validate")


def cmd_report(args) -> int:
    written = build_report(args.run, args.threshold_mode)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_export(args) -> int:
    print(export_responses(args.run, args.output))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tutorsim", description="Persona-conditioned tutoring dialogue simulation")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate tutoring dialogues")
    p.add_argument("--config", required=True, help="run config JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="run the judge instruments over a dialogue corpus")
    p.add_argument("--config", required=True, help="run config JSON (judge section)")
    p.add_argument("--run", help="run directory (default: from config)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="write agreement, BFI and scaffolding tables")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--threshold-mode", choices=["midpoint", "corpus_mean"], help="override the run's BFI labelling rule")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-responses", help="dump student utterances grouped by profile")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--output", help="output path (default: <run>/report/student_responses.txt)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, CorpusError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TutorsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
