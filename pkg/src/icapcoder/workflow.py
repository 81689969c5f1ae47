"""Three-agent workflow: scene segmentation, cursor-informed classification, evidence checks.

Stages per video:

1. ``osds_segment``: keyframes split the video into blocks, the first frame
   of each block is scene-classified, and adjacent equal-scene blocks merge.
2. ``icvp_classify``: each scene segment is shown with the cursor's activity
   region outlined, plus a trajectory summary and scene guidance.
3. ``evbm_validate``: every candidate action is checked against measured
   evidence (scrolls, localized edits, cursor pattern) before it is kept.

``run_workflow`` maps the kept actions back onto fixed evaluation units.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

from . import prompts
from .config import DEFAULT_AGENT, AgentConfig
from .core import ACTIONS, SCENES, Action, EvaluationUnit, LabelRecord, Scene, compatible_scenes
from .ingest import FrameSequence
from .vision import (
    CursorTrajectory,
    MotionPattern,
    PairEvidence,
    activity_box,
    detect_cursor,
    detect_keyframes,
    overlay_highlight,
    pair_evidence,
)
from .vlm import ChatClient, ChatRequest, Message, VLMError, encode_png, request_label

log = logging.getLogger(__name__)


class WorkflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSegment:
    start_index: int
    end_index: int
    scene: Scene
    source_keyframes: tuple[int, ...] = ()
    flagged: bool = False

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError(f"segment start {self.start_index} after end {self.end_index}")

    @property
    def segment_id(self) -> str:
        return f"{self.start_index}-{self.end_index}"

    def overlaps(self, first: int, last: int) -> bool:
        return self.start_index <= last and self.end_index >= first


@dataclass(frozen=True)
class ActionCandidate:
    action: Action
    confidence: float
    evidence_text: str
    cursor_pattern: MotionPattern
    segment_ref: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"action": self.action.value, "confidence": self.confidence,
                "evidence": self.evidence_text, "cursor_pattern": self.cursor_pattern.value,
                "segment": self.segment_ref}


@dataclass(frozen=True)
class ValidationVerdict:
    candidate: ActionCandidate
    kept: bool
    reasons: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"candidate": self.candidate.to_dict(), "kept": self.kept, "reasons": list(self.reasons)}


# --- scene segmentation ---------------------------------------------------------------


def merge_segments(segments: list[SceneSegment]) -> list[SceneSegment]:
    """Join neighbouring segments that carry the same scene."""
    out: list[SceneSegment] = []
    for seg in segments:
        if out and out[-1].scene is seg.scene and out[-1].end_index + 1 == seg.start_index:
            prev = out[-1]
            out[-1] = SceneSegment(prev.start_index, seg.end_index, seg.scene,
                                   prev.source_keyframes + seg.source_keyframes, prev.flagged or seg.flagged)
        else:
            out.append(seg)
    return out


def scene_request(seq: FrameSequence, position: int, config: AgentConfig) -> ChatRequest:
    frame = seq[position]
    d = config.prompt_dir
    text = prompts.render("scene.txt", d, taxonomy=prompts.taxonomy(d), frame=position, video=seq.source_id,
                          tag=prompts.tag(f"{seq.source_id}/scene/{position}", config.fixture_tags))
    return ChatRequest(config.model_id, (Message("user", (text, encode_png(frame.pixels))),),
                       max_tokens=config.max_tokens)


def _first_scene(scenes) -> Scene | None:
    for s in SCENES:
        if s in scenes:
            return s
    return None


def osds_segment(seq: FrameSequence, vlm: ChatClient, config: AgentConfig = DEFAULT_AGENT,
                 trace: dict | None = None) -> list[SceneSegment]:
    """Partition the video into scene-homogeneous segments.

    A block whose scene cannot be obtained inherits the previous block's
    scene (or the next good one, for the first block) and is flagged.
    Raises WorkflowError if no block could be classified.
    """
    if len(seq) == 0:
        raise ValueError("cannot segment an empty sequence")
    keys = detect_keyframes(seq, config.vision.keyframe_tau)
    bounds = list(zip(keys, [k - 1 for k in keys[1:]] + [len(seq) - 1]))
    scenes: list[Scene | None] = []
    block_log = []
    for start, end in bounds:
        req = scene_request(seq, start, config)
        entry = {"start": start, "end": end, "prompt": req.text}
        try:
            attempt = request_label(vlm, req, f"{seq.source_id}/scene/{start}")
            scene = _first_scene(attempt.label.scenes) if attempt.label else None
            entry.update(replies=attempt.replies, failure=attempt.failure)
        except VLMError as exc:
            scene = None
            entry.update(replies=[], failure=f"provider error: {exc}")
        entry["scene"] = scene.value if scene else None
        scenes.append(scene)
        block_log.append(entry)
    if all(s is None for s in scenes):
        raise WorkflowError(f"{seq.source_id}: no block could be scene-classified")
    blocks = []
    last = next(s for s in scenes if s is not None)
    for (start, end), scene in zip(bounds, scenes):
        flagged = scene is None
        if scene is None:
            scene = last
        last = scene
        blocks.append(SceneSegment(start, end, scene, (start,), flagged))
    segments = merge_segments(blocks)
    if trace is not None:
        trace["keyframes"] = keys
        trace["blocks"] = block_log
        trace["segments"] = [{"start": s.start_index, "end": s.end_index, "scene": s.scene.value,
                              "flagged": s.flagged} for s in segments]
    return segments


# --- evidence -------------------------------------------------------------------------


@dataclass
class SegmentEvidence:
    """Measurements EVBM needs, computed once per segment."""

    segment: SceneSegment
    pairs: list[PairEvidence]
    trajectory: CursorTrajectory

    @classmethod
    def measure(cls, segment: SceneSegment, seq: FrameSequence, config: AgentConfig = DEFAULT_AGENT):
        sub = seq.subsequence(segment.start_index, segment.end_index)
        v = config.vision
        pairs = [pair_evidence(a, b, v) for a, b in zip(sub.frames, sub.frames[1:])]
        if len(sub) >= 2:
            traj = detect_cursor(sub, config=v)
        else:
            traj = CursorTrajectory((), MotionPattern.NONE, 0.0)
        return cls(segment, pairs, traj)

    @cached_property
    def shift_pairs(self) -> int:
        return sum(p.shift.detected for p in self.pairs)

    @cached_property
    def localized_pairs(self) -> int:
        return sum(p.localized for p in self.pairs)

    @property
    def keyframes_inside(self) -> int:
        return sum(1 for k in self.segment.source_keyframes if k > self.segment.start_index)

    @property
    def pattern(self) -> MotionPattern:
        return self.trajectory.pattern


# --- ICVP -----------------------------------------------------------------------------


def icvp_request(segment: SceneSegment, seq: FrameSequence, evidence: SegmentEvidence,
                 config: AgentConfig = DEFAULT_AGENT) -> ChatRequest:
    n = segment.end_index - segment.start_index + 1
    pos = prompts.sample_positions(n, config.icvp_stride, config.max_images)
    frames = [seq[segment.start_index + p] for p in pos]
    first = frames[0]
    box = activity_box(evidence.trajectory, first.width, first.height)
    if box is not None:
        frames = [overlay_highlight(f, box, config.vision.overlay_thickness) for f in frames]
    d = config.prompt_dir
    sid = f"{seq.source_id}/{segment.segment_id}"
    text = prompts.render(
        "icvp.txt", d,
        start=segment.start_index, end=segment.end_index, n_frames=n, scene_name=segment.scene.value,
        stride=config.icvp_stride, cursor=evidence.trajectory.summary(),
        guidance=prompts.scene_guidance(segment.scene, d), taxonomy=prompts.taxonomy(d),
        output_format=prompts.output_format(d), segment_id=sid,
        tag=prompts.tag(f"{seq.source_id}/icvp/{segment.segment_id}", config.fixture_tags),
    )
    return ChatRequest(config.model_id, (Message("user", (text, *(encode_png(f.pixels) for f in frames))),),
                       max_tokens=config.max_tokens)


def icvp_classify(segment: SceneSegment, seq: FrameSequence, vlm: ChatClient,
                  config: AgentConfig = DEFAULT_AGENT, evidence: SegmentEvidence | None = None,
                  trace: dict | None = None) -> list[ActionCandidate]:
    """Candidate actions for one segment. Unreadable replies give an empty list.

    Provider errors propagate.
    """
    evidence = evidence or SegmentEvidence.measure(segment, seq, config)
    req = icvp_request(segment, seq, evidence, config)
    attempt = request_label(vlm, req, f"{seq.source_id}/icvp/{segment.segment_id}")
    if trace is not None:
        trace.update(prompt=req.text, n_images=req.n_images, replies=attempt.replies, failure=attempt.failure)
    if attempt.label is None:
        return []
    label = attempt.label
    return [ActionCandidate(a, label.confidences.get(a, 0.5), label.evidence.get(a, ""), evidence.pattern,
                            f"{seq.source_id}/{segment.segment_id}")
            for a in ACTIONS if a in label.actions]


# --- EVBM -----------------------------------------------------------------------------


def required_signals(action: Action, ev: SegmentEvidence, evidence_text: str = "") -> list[tuple[str, bool]]:
    """Named evidence checks an action must pass, with their outcomes."""
    scene = ev.segment.scene
    pattern = ev.pattern
    if action is Action.READING_WITH_SCROLLING:
        return [("vertical-shift>=2", ev.shift_pairs >= 2),
                ("cursor-static-or-none", pattern in (MotionPattern.STATIC, MotionPattern.NONE))]
    if action is Action.READING_WITH_HIGHLIGHTING:
        return [("cursor-linear-horizontal", pattern is MotionPattern.LINEAR_HORIZONTAL),
                ("no-vertical-shift", ev.shift_pairs == 0)]
    if action is Action.FREEZING:
        return [("no-cursor-points", not ev.trajectory.points),
                ("all-diffs<0.005", all(p.diff_score < 0.005 for p in ev.pairs))]
    if action is Action.GROUP_DOCUMENT_CO_EDITING:
        return [("scene=docs", scene is Scene.DOCS), ("localized-diffs>=3", ev.localized_pairs >= 3)]
    if action is Action.PROMPTING_GAI:
        return [("scene=gai", scene is Scene.GAI), ("localized-diffs>=2", ev.localized_pairs >= 2)]
    if action is Action.SEARCHING_INTERNET:
        return [("scene=web", scene is Scene.WEB),
                ("keyframe-or-localized-diffs>=2", ev.keyframes_inside >= 1 or ev.localized_pairs >= 2)]
    if action is Action.TICKING_ANSWERS:
        return [("scene=docs", scene is Scene.DOCS), ("localized-diffs>=1", ev.localized_pairs >= 1)]
    if action is Action.COPY_AND_PASTE:
        return [("cursor-linear-horizontal-or-jump",
                 pattern in (MotionPattern.LINEAR_HORIZONTAL, MotionPattern.JUMP)),
                ("evidence-text", bool(evidence_text.strip()))]
    raise ValueError(f"no signal table entry for {action}")


def evbm_validate(candidates: list[ActionCandidate], segment: SceneSegment, seq: FrameSequence,
                  config: AgentConfig = DEFAULT_AGENT,
                  evidence: SegmentEvidence | None = None) -> list[ValidationVerdict]:
    """Keep a candidate when its evidence holds, or when it is confident and scene-compatible."""
    if not candidates:
        return []
    evidence = evidence or SegmentEvidence.measure(segment, seq, config)
    verdicts = []
    for c in candidates:
        if segment.scene not in compatible_scenes(c.action):
            verdicts.append(ValidationVerdict(c, False, ("scene-incompatible",)))
            continue
        signals = required_signals(c.action, evidence, c.evidence_text)
        reasons = [f"{name}:{'ok' if ok else 'failed'}" for name, ok in signals]
        if all(ok for _, ok in signals):
            kept = True
        elif c.confidence >= config.override_confidence:
            kept = True
            reasons.append(f"override:confidence>={config.override_confidence:g}")
        else:
            kept = False
        verdicts.append(ValidationVerdict(c, kept, tuple(reasons)))
    return verdicts


# --- orchestration --------------------------------------------------------------------


@dataclass
class SegmentResult:
    segment: SceneSegment
    candidates: list[ActionCandidate] = field(default_factory=list)
    verdicts: list[ValidationVerdict] = field(default_factory=list)
    flagged: bool = False
    error: str | None = None
    trace: dict = field(default_factory=dict)


@dataclass
class WorkflowResult:
    records: list[LabelRecord]
    unvalidated: list[LabelRecord]
    segments: list[SceneSegment]
    trace: dict


def process_segment(segment: SceneSegment, seq: FrameSequence, vlm: ChatClient,
                    config: AgentConfig = DEFAULT_AGENT) -> SegmentResult:
    result = SegmentResult(segment, flagged=segment.flagged)
    tr = result.trace
    tr.update(start=segment.start_index, end=segment.end_index, scene=segment.scene.value)
    evidence = SegmentEvidence.measure(segment, seq, config)
    tr.update(cursor=evidence.trajectory.summary(), shift_pairs=evidence.shift_pairs,
              localized_pairs=evidence.localized_pairs, keyframes_inside=evidence.keyframes_inside)
    try:
        result.candidates = icvp_classify(segment, seq, vlm, config, evidence, tr)
    except VLMError as exc:
        result.error = f"provider error: {exc}"
        result.flagged = True
        tr["failure"] = result.error
        return result
    if tr.get("failure"):
        result.flagged = True
    result.verdicts = evbm_validate(result.candidates, segment, seq, config, evidence)
    tr["verdicts"] = [v.to_dict() for v in result.verdicts]
    return result


def _assemble(unit: EvaluationUnit, results: list[SegmentResult], validated: bool) -> LabelRecord:
    touching = [r for r in results if r.segment.overlaps(unit.first, unit.last)]
    scenes = {r.segment.scene for r in touching}
    conf: dict[Action, float] = {}
    evidence: dict[Action, list[str]] = {}
    for r in touching:
        kept = [v.candidate for v in r.verdicts if v.kept] if validated else r.candidates
        for c in kept:
            conf[c.action] = max(conf.get(c.action, 0.0), c.confidence)
            if c.evidence_text:
                evidence.setdefault(c.action, []).append(c.evidence_text)
    flagged = any(r.flagged for r in touching)
    return LabelRecord(unit.unit_id, frozenset(scenes), frozenset(conf), conf,
                       {a: "; ".join(t) for a, t in evidence.items()}, flagged)


def run_workflow(seq: FrameSequence, units: list[EvaluationUnit], vlm: ChatClient,
                 config: AgentConfig = DEFAULT_AGENT, jobs: int = 1) -> WorkflowResult:
    """Segment once, classify and validate each segment, then label every unit.

    A unit's scenes are those of every segment overlapping it, its actions the
    kept candidates of those segments (highest confidence wins). If the video
    cannot be segmented at all, every unit gets an empty flagged record.
    """
    trace: dict = {"video": seq.source_id}
    try:
        segments = osds_segment(seq, vlm, config, trace)
    except WorkflowError as exc:
        log.warning("%s", exc)
        trace["failure"] = str(exc)
        empty = [LabelRecord(u.unit_id, flagged=True) for u in units]
        return WorkflowResult(empty, list(empty), [], trace)
    if jobs > 1 and len(segments) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda s: process_segment(s, seq, vlm, config), segments))
    else:
        results = [process_segment(s, seq, vlm, config) for s in segments]
    trace["segment_results"] = [r.trace for r in results]
    records = [_assemble(u, results, True) for u in units]
    unvalidated = [_assemble(u, results, False) for u in units]
    return WorkflowResult(records, unvalidated, segments, trace)
