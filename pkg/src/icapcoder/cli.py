"""Command-line entry point: ``icapcoder run | eval | synth``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import MODES, ConfigError, build_config, load_config_file
from .core import LabelFileError
from .evaluation import EvaluationError, evaluate_corpus, write_report
from .ingest import IngestError
from .synth import CorpusSpec, SpecError, corpus_digest, generate_corpus, load_corpus_spec
from .vlm import VLMError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("icapcoder")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icapcoder", description="Code on-screen learning behaviours in screen recordings.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="classify every unit of a corpus")
    r.add_argument("--in", dest="input", required=True, help="corpus root, frame directory or video")
    r.add_argument("--out", required=True, help="run directory")
    r.add_argument("--config", help="JSON or YAML config file; flags override it")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--mock", dest="mock_script", help="mock script TSV (offline mode)")
    r.add_argument("--endpoint", help="OpenAI-compatible base URL")
    r.add_argument("--model", dest="model_id")
    r.add_argument("--credentials-env", help="environment variable holding the API key")
    r.add_argument("--fps", type=float)
    r.add_argument("--window-s", type=float)
    r.add_argument("--jobs", type=int)
    r.add_argument("--max-steps", type=int)
    r.add_argument("--max-images", type=int)
    r.add_argument("--rate-limit", dest="rate_limit_rpm", type=float, help="requests per minute")
    r.add_argument("--decoder", help="command template for video decoding")
    r.add_argument("--prompt-dir", help="directory overriding bundled prompt templates")
    r.add_argument("--seed", type=int)

    e = sub.add_parser("eval", help="score predictions against gold labels")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--report", help="directory for report.json and report.txt")

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--spec", help="JSON or YAML corpus spec (defaults apply when omitted)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=4)
    return p


RUN_OVERRIDES = ("mode", "mock_script", "endpoint", "model_id", "credentials_env", "fps", "window_s",
                 "jobs", "max_steps", "max_images", "rate_limit_rpm", "decoder", "prompt_dir", "seed")


def _cmd_run(args) -> int:
    from .pipeline import run_corpus

    data = load_config_file(args.config) if args.config else {}
    cfg = build_config(data, {k: getattr(args, k) for k in RUN_OVERRIDES})
    summary = run_corpus(cfg, args.input, args.out)
    print(f"{len(summary.records)} units coded, {summary.n_errors} provider errors; "
          f"predictions in {Path(args.out) / 'predictions.tsv'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    report = evaluate_corpus(args.gold, args.pred)
    print(report.to_text())
    if args.report:
        write_report(report, args.report)
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = load_corpus_spec(args.spec, args.seed) if args.spec else CorpusSpec(seed=args.seed or 0)
    corpus = generate_corpus(spec, args.out, args.jobs)
    print(f"{len(corpus.videos)} videos, {len(corpus.gold)} units written to {corpus.root} "
          f"(digest {corpus_digest(corpus.root)[:16]})")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "eval": _cmd_eval, "synth": _cmd_synth}


def run_command(argv: list[str] | None = None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpecError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestError, LabelFileError, EvaluationError, VLMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())
