"""Reason-act-observe coding loop with a closed tool registry and a reflection pass."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

from . import prompts
from .baseline import build_fewshot_prompt
from .config import DEFAULT_AGENT, AgentConfig
from .core import ACTIONS, EvaluationUnit, LabelRecord, check_compatibility
from .ingest import FrameSequence
from .vision import PairEvidence, detect_cursor, detect_keyframes, frame_diff_score, pair_evidence
from .vlm import (
    ChatClient,
    ChatRequest,
    Message,
    ParseFailure,
    StructuredLabel,
    VLMError,
    encode_png,
    extract_json_object,
    label_from_object,
    parse_structured_label,
    request_label,
)

TOOL_NAMES = ("SegmentProbe", "CursorProbe", "ShiftProbe", "ClassifyBehavior", "CompatibilityCheck", "Finish")


@dataclass(frozen=True)
class Step:
    thought: str
    action_name: str
    action_input: str
    observation: str

    def to_dict(self) -> dict:
        return {"thought": self.thought, "action": self.action_name,
                "action_input": self.action_input, "observation": self.observation}

    @classmethod
    def from_dict(cls, d: dict) -> Step:
        return cls(d["thought"], d["action"], d["action_input"], d["observation"])


@dataclass(frozen=True)
class ReactState:
    unit_ref: str
    scratchpad: tuple[Step, ...] = ()
    step: int = 0
    done: bool = False
    label: StructuredLabel | None = None
    max_steps: int = 8

    def __post_init__(self):
        if self.step > self.max_steps:
            raise ValueError(f"step {self.step} exceeds max_steps {self.max_steps}")

    @property
    def exhausted(self) -> bool:
        return not self.done and self.step >= self.max_steps

    def to_dict(self) -> dict:
        return {"unit_ref": self.unit_ref, "step": self.step, "done": self.done, "max_steps": self.max_steps,
                "label": self.label.to_dict() if self.label else None,
                "label_warnings": list(self.label.warnings) if self.label else [],
                "scratchpad": [s.to_dict() for s in self.scratchpad]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> ReactState:
        label = None
        if d.get("label") is not None:
            parsed = label_from_object(d["label"])
            if isinstance(parsed, ParseFailure):
                raise ValueError(f"bad label in trace: {parsed.reason}")
            label = replace(parsed, warnings=tuple(d.get("label_warnings", ())))
        return cls(d["unit_ref"], tuple(Step.from_dict(s) for s in d["scratchpad"]), d["step"], d["done"],
                   label, d.get("max_steps", 8))

    @classmethod
    def from_json(cls, text: str) -> ReactState:
        return cls.from_dict(json.loads(text))


# --- tools ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Tool:
    name: str
    description: str
    run: Callable[[str], str]


@dataclass
class ToolBox:
    """The fixed tool registry, bound to one evaluation unit."""

    unit: EvaluationUnit
    seq: FrameSequence
    vlm: ChatClient
    config: AgentConfig = DEFAULT_AGENT
    tools: dict[str, Tool] = field(init=False)

    def __post_init__(self):
        specs = [
            ("SegmentProbe", "frame-change scores and scene-change points inside the clip", self.segment_probe),
            ("CursorProbe", "cursor positions, movement pattern and activity ratio", self.cursor_probe),
            ("ShiftProbe", "vertical scrolling detected between consecutive frames", self.shift_probe),
            ("ClassifyBehavior", "ask the vision model for scenes and actions; input: optional focus note",
             self.classify),
            ("CompatibilityCheck", "check a label object against the scene/action rules; input: the label",
             self.compatibility),
            ("Finish", "submit the final label object; ends the episode", self.finish),
        ]
        self.tools = {name: Tool(name, desc, fn) for name, desc, fn in specs}

    @cached_property
    def clip(self) -> FrameSequence:
        return self.seq.subsequence(self.unit.first, self.unit.last)

    @cached_property
    def pairs(self) -> list[PairEvidence]:
        v = self.config.vision
        return [pair_evidence(a, b, v) for a, b in zip(self.clip.frames, self.clip.frames[1:])]

    def describe(self) -> str:
        return "\n".join(f"- {t.name}: {t.description}" for t in self.tools.values())

    def resolve(self, name: str) -> Tool | None:
        key = str(name).strip().lower()
        for t in self.tools.values():
            if t.name.lower() == key:
                return t
        return None

    def segment_probe(self, _input: str) -> str:
        clip = self.clip
        keys = detect_keyframes(clip, self.config.vision.keyframe_tau)
        scores = [frame_diff_score(a, b) for a, b in zip(clip.frames, clip.frames[1:])]
        if not scores:
            return "single frame; no changes to measure"
        changes = ", ".join(f"{clip[i].index}->{clip[i + 1].index}:{s:.3f}" for i, s in enumerate(scores))
        cuts = [clip[k].index for k in keys[1:]]
        return (f"scene-change frames: {cuts if cuts else 'none'}; "
                f"pairs with visible change: {sum(s >= 0.005 for s in scores)}/{len(scores)}; "
                f"localized edits: {sum(p.localized for p in self.pairs)}; scores: {changes}")

    def cursor_probe(self, _input: str) -> str:
        if len(self.clip) < 2:
            return "pattern: None; activity_ratio: 0.00; single frame"
        return detect_cursor(self.clip, config=self.config.vision).summary()

    def shift_probe(self, _input: str) -> str:
        if not self.pairs:
            return "single frame; no scrolling measurable"
        found = [(self.clip[i + 1].index, p.shift.offset_px) for i, p in enumerate(self.pairs) if p.shift.detected]
        detail = ", ".join(f"f{i}:{d:+d}px" for i, d in found) or "none"
        return f"vertical scroll in {len(found)} of {len(self.pairs)} frame pairs; offsets: {detail}"

    def classify(self, note: str) -> str:
        prompt = build_fewshot_prompt(self.unit, self.seq, self.config, f"{self.unit.unit_id}/classify")
        if note.strip():
            prompt = replace(prompt, unit_text=f"Agent note: {note.strip()}\n{prompt.unit_text}")
        attempt = request_label(self.vlm, prompt.to_request(self.config.model_id, self.config.max_tokens),
                                f"{self.unit.unit_id}/classify")
        if attempt.label is None:
            return f"classification failed: {attempt.failure}"
        return attempt.label.to_json()

    def compatibility(self, text: str) -> str:
        label = parse_structured_label(text)
        if isinstance(label, ParseFailure):
            return f"invalid input: {label.reason}"
        problems = check_compatibility(label.to_record(self.unit.unit_id))
        if not problems:
            return "compatible"
        return "incompatible: " + "; ".join(
            f"{a.value} needs one of [{', '.join(sorted(s.value for s in allowed))}]" for a, allowed in problems)

    def finish(self, _input: str) -> str:
        # the loop itself handles Finish; this only keeps the registry uniform
        return "finished"


# --- the loop -------------------------------------------------------------------------


def render_scratchpad(state: ReactState) -> str:
    if not state.scratchpad:
        return "(none yet)"
    out = []
    for i, s in enumerate(state.scratchpad, start=1):
        out.append(f"Step {i}\nThought: {s.thought}\nAction: {s.action_name}\n"
                   f"Action Input: {s.action_input}\nObservation: {s.observation}")
    return "\n\n".join(out)


def react_request(state: ReactState, tools: ToolBox) -> ChatRequest:
    cfg = tools.config
    d = cfg.prompt_dir
    unit = tools.unit
    text = prompts.render(
        "react.txt", d,
        duration=f"{unit.duration_s:g}", n_frames=len(unit.frame_indices), first=unit.first, last=unit.last,
        taxonomy=prompts.taxonomy(d), tools=tools.describe(), step=state.step, max_steps=state.max_steps,
        scratchpad=render_scratchpad(state), unit_id=unit.unit_id,
        tag=prompts.tag(f"{unit.unit_id}/react/{state.step + 1}", cfg.fixture_tags),
    )
    image = encode_png(tools.seq[unit.first].pixels)
    return ChatRequest(cfg.model_id, (Message("user", (text, image)),), max_tokens=cfg.max_tokens)


def _as_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def _advance(state: ReactState, step: Step, **changes) -> ReactState:
    return replace(state, scratchpad=state.scratchpad + (step,), step=state.step + 1, **changes)


def react_step(state: ReactState, vlm: ChatClient, tools: ToolBox) -> ReactState:
    """One reason-act-observe cycle. Every call consumes a step, whatever happens."""
    if state.done:
        raise ValueError("episode already finished")
    if state.step >= state.max_steps:
        raise ValueError("no steps left")
    try:
        reply = vlm.complete(react_request(state, tools)).text
    except VLMError as exc:
        return _advance(state, Step("", "", "", f"provider error: {exc}"))
    obj = extract_json_object(reply)
    choices = ", ".join(TOOL_NAMES)
    tool = tools.resolve(obj.get("action", "")) if isinstance(obj, dict) else None
    if tool is None:
        thought = _as_text(obj.get("thought")) if isinstance(obj, dict) else ""
        name = _as_text(obj.get("action")) if isinstance(obj, dict) else ""
        return _advance(state, Step(thought, name, "", f"invalid action, choose from: {choices}"))
    thought = _as_text(obj.get("thought"))
    raw_input = obj.get("action_input")
    text_input = _as_text(raw_input)
    if tool.name == "Finish":
        label = (label_from_object(raw_input) if isinstance(raw_input, dict)
                 else parse_structured_label(text_input))
        if isinstance(label, ParseFailure):
            return _advance(state, Step(thought, tool.name, text_input, f"invalid Finish input: {label.reason}"))
        return _advance(state, Step(thought, tool.name, text_input, "finished"), done=True, label=label)
    try:
        observation = tool.run(text_input)
    except VLMError as exc:
        observation = f"provider error: {exc}"
    return _advance(state, Step(thought, tool.name, text_input, observation))


def reflect(label: StructuredLabel, state: ReactState, config: AgentConfig = DEFAULT_AGENT) -> LabelRecord:
    """Calibrate the final label.

    Actions with no matching scene lose ``reflection_penalty`` confidence
    (floored at 0) and are kept; the record is flagged when any such action
    exists, when any final confidence is below ``review_threshold``, or when
    the episode ran out of steps.
    """
    record = label.to_record(state.unit_ref)
    conf = {a: label.confidences.get(a, 0.5) for a in record.actions}
    evidence = dict(record.evidence)
    flagged = state.exhausted
    for action, allowed in check_compatibility(record):
        conf[action] = max(0.0, conf[action] - config.reflection_penalty)
        note = (f"[reflection: no scene among {sorted(s.value for s in allowed)} was seen; "
                f"confidence lowered by {config.reflection_penalty:g}]")
        evidence[action] = f"{evidence[action]} {note}".strip() if action in evidence else note
        flagged = True
    for action in ACTIONS:
        if action in conf and conf[action] < config.review_threshold:
            flagged = True
            if "[reflection" not in evidence.get(action, ""):
                note = f"[reflection: confidence below {config.review_threshold:g}, needs review]"
                evidence[action] = f"{evidence.get(action, '')} {note}".strip()
    return LabelRecord(record.unit_id, record.scenes, record.actions, conf, evidence, flagged)


@dataclass
class ReactResult:
    record: LabelRecord
    state: ReactState

    def trace(self) -> dict:
        return {"unit_id": self.state.unit_ref, "state": self.state.to_dict(), "record": self.record.to_dict()}


EMPTY_LABEL = StructuredLabel(frozenset(), frozenset(), {}, {}, ())


def run_react(unit: EvaluationUnit, seq: FrameSequence, vlm: ChatClient,
              config: AgentConfig = DEFAULT_AGENT) -> ReactResult:
    """Loop until Finish or the step budget runs out, then reflect."""
    tools = ToolBox(unit, seq, vlm, config)
    state = ReactState(unit.unit_id, max_steps=config.max_steps)
    while not state.done and state.step < state.max_steps:
        state = react_step(state, vlm, tools)
    label = state.label if state.done and state.label is not None else EMPTY_LABEL
    return ReactResult(reflect(label, state, config), state)
