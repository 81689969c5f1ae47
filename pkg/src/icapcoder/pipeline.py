"""Run one coding strategy over a directory of videos and write the run artifacts.

Run directory layout::

    predictions.tsv          one row per evaluation unit, in corpus order
    manifest.json            config, code version, inputs, per-unit status
    traces/<video>.json      workflow: segmentation, prompts, replies, verdicts
    traces/<video>/<unit>.json   single / react: prompt and replies, or the scratchpad
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, prompts
from .baseline import few_shot_classify
from .config import ConfigError, RunConfig
from .core import EvaluationUnit, LabelRecord, write_labels
from .ingest import FrameSequence, IngestError, load_frame_sequence, segment_fixed
from .react import run_react
from .vlm import ChatClient, HttpVLMClient, MockScript, MockVLM, RateLimiter, VLMError
from .workflow import run_workflow

log = logging.getLogger(__name__)

VIDEO_SUFFIXES = {".mp4", ".mkv", ".mov", ".avi", ".webm"}


def discover_videos(root: str | Path) -> list[Path]:
    """Frame directories (or video files) under ``root``, sorted by name.

    ``root`` may be a generated corpus (with a ``videos/`` folder), a folder of
    frame directories, or a single frame directory.
    """
    root = Path(root)
    if not root.exists():
        raise IngestError(f"input {root} does not exist")
    if root.is_file():
        return [root]
    if (root / "videos").is_dir():
        root = root / "videos"
    if any(p.suffix.lower() == ".png" for p in root.iterdir()):
        return [root]
    found = sorted(p for p in root.iterdir()
                   if (p.is_dir() and any(q.suffix.lower() == ".png" for q in p.iterdir()))
                   or p.suffix.lower() in VIDEO_SUFFIXES)
    if not found:
        raise IngestError(f"no frame directories or videos found under {root}")
    return found


def build_client(cfg: RunConfig) -> ChatClient:
    if cfg.mock:
        return MockVLM(MockScript.load(cfg.mock_script))
    key = os.environ.get(cfg.credentials_env)
    if not key:
        raise ConfigError(f"credentials variable {cfg.credentials_env} is not set")
    limiter = RateLimiter(cfg.rate_limit_rpm) if cfg.rate_limit_rpm else None
    return HttpVLMClient(cfg.endpoint, key, timeout_s=cfg.timeout_s, rate_limiter=limiter)


@dataclass
class UnitOutcome:
    record: LabelRecord
    status: str
    trace: dict


@dataclass
class RunSummary:
    records: list[LabelRecord] = field(default_factory=list)
    statuses: dict[str, str] = field(default_factory=dict)

    @property
    def n_errors(self) -> int:
        return sum(1 for s in self.statuses.values() if s.startswith("error"))


def _status(record: LabelRecord) -> str:
    return "flagged" if record.flagged else "ok"


def _single(unit: EvaluationUnit, seq: FrameSequence, vlm: ChatClient, cfg: RunConfig) -> UnitOutcome:
    trace: dict = {"unit_id": unit.unit_id}
    try:
        rec = few_shot_classify(unit, seq, vlm, cfg.agent, trace)
    except VLMError as exc:
        trace["failure"] = f"provider error: {exc}"
        return UnitOutcome(LabelRecord(unit.unit_id, flagged=True), f"error: {exc}", trace)
    return UnitOutcome(rec, _status(rec), trace)


def _react(unit: EvaluationUnit, seq: FrameSequence, vlm: ChatClient, cfg: RunConfig) -> UnitOutcome:
    result = run_react(unit, seq, vlm, cfg.agent)
    status = "flagged: step budget exhausted" if result.state.exhausted else _status(result.record)
    return UnitOutcome(result.record, status, result.trace())


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True, default=_plain)
    path.write_text(text + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _frames_digest(seq: FrameSequence) -> str:
    h = hashlib.sha256()
    for f in seq:
        h.update(f.pixels.tobytes())
    return h.hexdigest()


def _prompt_digest(cfg: RunConfig) -> str:
    h = hashlib.sha256()
    for p in sorted(prompts.PROMPT_DIR.iterdir()):
        src = prompts.template_path(p.name, cfg.agent.prompt_dir)
        h.update(p.name.encode())
        h.update(src.read_bytes())
    return h.hexdigest()


def run_corpus(cfg: RunConfig, input_path: str | Path, out_dir: str | Path,
               client: ChatClient | None = None) -> RunSummary:
    """Classify every unit of every video and write predictions, traces and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vlm = client or build_client(cfg)
    summary = RunSummary()
    inputs = []
    for path in discover_videos(input_path):
        seq = load_frame_sequence(path, cfg.fps, cfg.decoder)
        units = segment_fixed(seq, cfg.window_s)
        inputs.append({"video": seq.source_id, "frames": len(seq), "units": len(units),
                       "pixels_sha256": _frames_digest(seq)})
        log.info("%s: %d frames, %d units", seq.source_id, len(seq), len(units))
        if cfg.mode == "workflow":
            result = run_workflow(seq, units, vlm, cfg.agent, cfg.jobs)
            outcomes = [UnitOutcome(r, _status(r), {}) for r in result.records]
            if "failure" in result.trace:
                outcomes = [UnitOutcome(o.record, f"error: {result.trace['failure']}", {}) for o in outcomes]
            _write_json(out / "traces" / f"{seq.source_id}.json", result.trace)
        else:
            worker = _single if cfg.mode == "single" else _react
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                outcomes = list(pool.map(lambda u: worker(u, seq, vlm, cfg), units))
            for u, o in zip(units, outcomes):
                _write_json(out / "traces" / seq.source_id / f"{u.unit_id}.json", o.trace)
        for o in outcomes:
            summary.records.append(o.record)
            summary.statuses[o.record.unit_id] = o.status
    write_labels(out / "predictions.tsv", summary.records)
    manifest = {
        "tool": "icapcoder",
        "version": __version__,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "mock_script_sha256": _sha256(Path(cfg.mock_script)) if cfg.mock else None,
        "prompts_sha256": _prompt_digest(cfg),
        "inputs": inputs,
        "units": [{"unit_id": uid, "status": st} for uid, st in summary.statuses.items()],
        "unit_errors": summary.n_errors,
    }
    _write_json(out / "manifest.json", manifest)
    return summary
