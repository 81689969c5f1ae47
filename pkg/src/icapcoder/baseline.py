"""Few-shot single-model coder: one request per evaluation unit."""
from __future__ import annotations

import json
from dataclasses import dataclass

from . import prompts
from .config import DEFAULT_AGENT, AgentConfig
from .core import EvaluationUnit, LabelRecord
from .ingest import Frame, FrameSequence
from .vlm import ChatClient, ChatRequest, Message, encode_png, request_label


@dataclass(frozen=True)
class FewShotPrompt:
    system_text: str
    exemplars: tuple[tuple[str, dict], ...]
    unit_frames: tuple[Frame, ...]
    output_format: str = ""
    unit_text: str = ""
    image_cap: int = 20

    def __post_init__(self):
        if not self.exemplars:
            raise ValueError("a few-shot prompt needs at least one exemplar")
        if len(self.unit_frames) > self.image_cap:
            raise ValueError(f"{len(self.unit_frames)} images exceed the cap of {self.image_cap}")

    def exemplar_block(self) -> str:
        lines = ["Worked examples:"]
        for i, (desc, label) in enumerate(self.exemplars, start=1):
            lines.append(f"Example {i}: {desc}\nLabel: {json.dumps(label)}")
        return "\n".join(lines)

    @property
    def text(self) -> str:
        parts = (self.system_text, self.exemplar_block(), self.output_format, self.unit_text)
        return "\n\n".join(p for p in parts if p)

    def to_request(self, model_id: str, max_tokens: int = 1024) -> ChatRequest:
        images = tuple(encode_png(f.pixels) for f in self.unit_frames)
        return ChatRequest(model_id, (Message("user", (self.text, *images)),), max_tokens=max_tokens)


def unit_frames(unit: EvaluationUnit, seq: FrameSequence, cap: int) -> list[Frame]:
    """The unit's frames resampled to 1 fps, thinned evenly to ``cap``."""
    stride = max(1, round(seq.fps))
    pos = prompts.sample_positions(len(unit.frame_indices), stride, cap)
    return [seq[unit.frame_indices[p]] for p in pos]


def build_fewshot_prompt(unit: EvaluationUnit, seq: FrameSequence, config: AgentConfig = DEFAULT_AGENT,
                         tag_key: str | None = None) -> FewShotPrompt:
    frames = unit_frames(unit, seq, config.max_images)
    d = config.prompt_dir
    system = prompts.render("fewshot.txt", d, duration=f"{unit.duration_s:g}", taxonomy=prompts.taxonomy(d))
    unit_text = prompts.render("fewshot_unit.txt", d, unit_id=unit.unit_id, n_images=len(frames),
                               tag=prompts.tag(tag_key or unit.unit_id, config.fixture_tags))
    return FewShotPrompt(system, tuple(prompts.exemplars(config.n_exemplars, d)), tuple(frames),
                         prompts.output_format(d), unit_text.rstrip(), config.max_images)


def few_shot_classify(unit: EvaluationUnit, seq: FrameSequence, vlm: ChatClient,
                      config: AgentConfig = DEFAULT_AGENT, trace: dict | None = None) -> LabelRecord:
    """Label one unit with a single request; two unreadable replies give an empty flagged record.

    Provider errors propagate. When ``trace`` is given it receives the
    prompt text and raw replies.
    """
    prompt = build_fewshot_prompt(unit, seq, config)
    attempt = request_label(vlm, prompt.to_request(config.model_id, config.max_tokens), unit.unit_id)
    if trace is not None:
        trace.update(unit_id=unit.unit_id, prompt=prompt.text, n_images=len(prompt.unit_frames),
                     replies=attempt.replies, failure=attempt.failure)
    if attempt.label is None:
        return LabelRecord(unit.unit_id, flagged=True)
    return attempt.label.to_record(unit.unit_id)
