"""Seeded synthetic screen recordings with gold labels and mock-VLM scripts.

Frames are drawn from flat templates: each scene has its own chrome and
page colours, content is a tall band of "text lines" seen through a
viewport, and behaviours are scripted edits of that picture (scrolling the
band, moving a 12x18 arrow, dropping solid rectangles for typed text).
Everything is a pure function of the spec and its seed.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from PIL import Image

from .core import (
    ACTIONS,
    SCENES,
    Action,
    LabelRecord,
    Scene,
    action_from_name,
    compatible_scenes,
    scene_from_name,
    write_labels,
)
from .ingest import Frame, FrameSequence, unit_id_for, window_bounds
from .vision import MotionPattern
from .vlm import MockScript, fixture_tag

FPS = 1.0

# --- scene templates ----------------------------------------------------------------


@dataclass(frozen=True)
class SceneStyle:
    side: tuple[int, int, int]
    page: tuple[int, int, int]
    text: tuple[int, int, int]
    panel: tuple[int, int, int]
    chunk: tuple[int, int, int]


# Page grays are far apart (about 95 / 245 / 175) so a scene switch is a
# keyframe, while text contrast stays low enough that scrolling is not.
# Text is always closer to the page than the dark cursor is, so a vacated
# cursor spot never looks like something appearing. Chrome lives only in
# the side columns, which look the same after any vertical scroll.
STYLES = {
    Scene.GAI: SceneStyle((40, 35, 30), (85, 95, 105), (150, 160, 170), (125, 135, 145), (240, 245, 250)),
    Scene.WEB: SceneStyle((215, 225, 235), (245, 245, 245), (155, 165, 175), (255, 255, 255),
                          (110, 120, 130)),
    Scene.DOCS: SceneStyle((60, 90, 150), (165, 175, 185), (85, 95, 105), (165, 175, 185), (20, 30, 40)),
}
CURSOR_COLOR = (0, 0, 0)


def _gray(color: tuple[int, int, int]) -> int:
    return sum(color) // 3


def cursor_glyph() -> np.ndarray:
    """Boolean 18x12 arrow: a right triangle with a short stem (102 pixels)."""
    g = np.zeros((18, 12), dtype=bool)
    for r in range(12):
        g[r, :r + 1] = True
    g[12:18, 3:7] = True
    return g


GLYPH = cursor_glyph()
GLYPH_CENTROID = (float(np.nonzero(GLYPH)[1].mean()), float(np.nonzero(GLYPH)[0].mean()))


@dataclass(frozen=True)
class Layout:
    width: int
    height: int

    @property
    def side(self) -> int:
        return self.width // 8

    @property
    def view_w(self) -> int:
        return self.width - 2 * self.side

    @property
    def view_h(self) -> int:
        return self.height

    def chunk_width(self, style: SceneStyle) -> int:
        # wide enough that one typed chunk is a visible, non-cursor change
        contrast = abs(_gray(style.chunk) - _gray(style.panel))
        need = 1.3 * 0.005 * 255 * self.width * self.height / (contrast * CHUNK_H)
        return max(80, math.ceil(need))


CHUNK_H = 14
CHUNK_PITCH = 18


def chrome(style: SceneStyle, layout: Layout) -> np.ndarray:
    img = np.empty((layout.height, layout.width, 3), dtype=np.uint8)
    img[:] = style.side
    return img


def text_band(rng: np.random.Generator, style: SceneStyle, height: int, width: int,
              blank_rows: Sequence[tuple[int, int]] = ()) -> np.ndarray:
    """Page texture: aperiodic lines of word-like runs."""
    band = np.empty((height, width, 3), dtype=np.uint8)
    band[:] = style.page
    y = int(rng.integers(4, 12))
    while y < height:
        lh = int(rng.integers(4, 8))
        length = int(width * rng.uniform(0.35, 0.95))
        x = int(rng.integers(6, 14))
        while x < length:
            w = int(rng.integers(6, 30))
            band[y:y + lh, x:min(x + w, length)] = style.text
            x += w + int(rng.integers(4, 9))
        y += lh + int(rng.integers(5, 11))
    for lo, hi in blank_rows:
        band[lo:hi] = style.page
    return band


# --- per-frame state ----------------------------------------------------------------


@dataclass
class FrameState:
    scroll: int = 0
    cursor: tuple[int, int] | None = None  # top-left of the glyph, frame coordinates
    rects: list[tuple[int, int, int, int, tuple[int, int, int]]] = field(default_factory=list)
    blocks: list[tuple[int, int, np.ndarray]] = field(default_factory=list)  # pasted images


@dataclass
class SpanRender:
    frames: list[np.ndarray]
    cursor_truth: list[tuple[float, float] | None]
    shifts: list[int]  # content offset from the previous frame (first entry 0)


def glyph_center(pos: tuple[int, int]) -> tuple[float, float]:
    return pos[0] + GLYPH_CENTROID[0], pos[1] + GLYPH_CENTROID[1]


def compose(base: np.ndarray, band: np.ndarray, layout: Layout, state: FrameState) -> np.ndarray:
    img = base.copy()
    s = layout.side
    img[:, s:s + layout.view_w] = band[state.scroll:state.scroll + layout.view_h]
    for y, x, h, w, color in state.rects:
        img[y:y + h, s + x:s + x + w] = color
    for y, x, block in state.blocks:
        img[y:y + block.shape[0], s + x:s + x + block.shape[1]] = block
    if state.cursor is not None:
        cx, cy = state.cursor
        region = img[cy:cy + GLYPH.shape[0], cx:cx + GLYPH.shape[1]]
        region[GLYPH[:region.shape[0], :region.shape[1]]] = CURSOR_COLOR
    return img


def _event_pairs(rng: np.random.Generator, n: int, minimum: int, p: float = 0.7) -> list[int]:
    """Frame positions (1..n-1) at which an edit happens."""
    if n < 2:
        return []
    pos = [k for k in range(1, n) if rng.random() < p]
    spare = [k for k in range(1, n) if k not in pos]
    rng.shuffle(spare)
    while len(pos) < min(minimum, n - 1):
        pos.append(spare.pop())
    return sorted(pos)


class _Behaviour:
    """Scripted frame states for one span."""

    def __init__(self, rng: np.random.Generator, scene: Scene, layout: Layout, n: int):
        self.rng, self.scene, self.layout, self.n = rng, scene, layout, n
        self.style = STYLES[scene]

    def view_point(self, x0: float = 0.05, x1: float = 0.85, y0: float = 0.05, y1: float = 0.85):
        L = self.layout
        x = L.side + int(self.rng.integers(int(x0 * L.view_w), int(x1 * L.view_w)))
        y = int(self.rng.integers(int(y0 * L.view_h), int(y1 * L.view_h)))
        return x, y

    def chunk_slots(self, top: int, rows: int) -> list[tuple[int, int, int]]:
        """``(y, x, w)`` slots for typed chunks, two per row, viewport coordinates."""
        L = self.layout
        cw = L.chunk_width(self.style)
        slots = []
        for r in range(rows):
            x = 6
            while True:
                w = int(self.rng.integers(cw, int(cw * 1.25) + 1))
                if x + w > L.view_w - 6:
                    break
                slots.append((top + r * CHUNK_PITCH, x, w))
                x += w + 10
        return slots

    def band(self, extra: int = 0, blank: Sequence[tuple[int, int]] = ()) -> np.ndarray:
        L = self.layout
        return text_band(self.rng, self.style, L.view_h + extra, L.view_w, blank)

    def states(self) -> tuple[np.ndarray, list[FrameState]]:
        raise NotImplementedError


class Freezing(_Behaviour):
    def states(self):
        cur = self.view_point()
        return self.band(), [FrameState(cursor=cur) for _ in range(self.n)]


class Scrolling(_Behaviour):
    def states(self):
        speed = int(self.rng.integers(6, 31))
        down = bool(self.rng.random() < 0.75)
        extra = speed * (self.n - 1)
        cur = self.view_point()
        out = []
        for k in range(self.n):
            off = k * speed if down else (self.n - 1 - k) * speed
            out.append(FrameState(scroll=off, cursor=cur))
        return self.band(extra), out


class Highlighting(_Behaviour):
    def states(self):
        L = self.layout
        x0 = L.side + 4
        x1 = L.side + L.view_w - GLYPH.shape[1] - 4
        _, y = self.view_point()
        out = []
        for k in range(self.n):
            x = x0 + round(k * (x1 - x0) / max(1, self.n - 1))
            out.append(FrameState(cursor=(x, y)))
        return self.band(), out


class _Typing(_Behaviour):
    """Chunks appear in a panel; when the panel is full it is cleared."""

    panel_rows = 2
    min_events = 2
    deletions = False

    def panel_top(self) -> int:
        return self.layout.view_h - CHUNK_PITCH * self.panel_rows - 12

    def panel(self) -> tuple[int, int, int, int, tuple[int, int, int]]:
        top = self.panel_top() - 4
        return top, 2, CHUNK_PITCH * self.panel_rows + 6, self.layout.view_w - 4, self.style.panel

    def states(self):
        L = self.layout
        band = self.band(blank=[(self.panel_top() - 8, L.view_h)])
        slots = self.chunk_slots(self.panel_top(), self.panel_rows)
        events = set(_event_pairs(self.rng, self.n, self.min_events))
        cur = self.view_point(y1=0.4)
        placed: list[int] = []
        out = []
        for k in range(self.n):
            if k in events:
                if len(placed) == len(slots):
                    placed = []
                elif self.deletions and placed and self.rng.random() < 0.2:
                    placed.pop()
                else:
                    placed.append(len(placed))
            rects = [self.panel()]
            rects += [(slots[i][0], slots[i][1], CHUNK_H, slots[i][2], self.style.chunk) for i in placed]
            out.append(FrameState(cursor=cur, rects=rects))
        return band, out


class Prompting(_Typing):
    pass


class CoEditing(_Typing):
    panel_rows = 4
    min_events = 3
    deletions = True


class Ticking(_Behaviour):
    def states(self):
        L = self.layout
        n_opts = 4
        top = L.view_h - n_opts * 24 - 8
        band = self.band(blank=[(top - 6, L.view_h)])
        cw = L.chunk_width(self.style)
        boxes = [(top + i * 24, 8, 16, cw) for i in range(n_opts)]
        events = _event_pairs(self.rng, self.n, 1, p=0.25)
        ticked: int | None = None
        cur = (L.side + boxes[0][1] + boxes[0][3] + 8, boxes[0][0])
        out = []
        for k in range(self.n):
            if k in events:
                choice = int(self.rng.integers(n_opts))
                ticked = choice if choice != ticked else (choice + 1) % n_opts
                y, x, _, w = boxes[ticked]
                cur = (L.side + x + w + 8, y)
            rects = [(y, x + w + 30, 6, 60, self.style.text) for y, x, _, w in boxes]
            if ticked is not None:
                y, x, h, w = boxes[ticked]
                rects.append((y, x, h, w, self.style.chunk))
            out.append(FrameState(cursor=cur, rects=rects))
        return band, out


class Searching(_Behaviour):
    def states(self):
        L = self.layout
        box_top = 8
        results_top = box_top + 40
        band = self.band(blank=[(0, results_top + 110)])
        slots = self.chunk_slots(box_top + 4, 1)
        results = text_band(self.rng, self.style, 100, L.view_w - 80)
        events = _event_pairs(self.rng, self.n, 2)
        typed = 0
        shown = False
        cur = (L.side + 20, box_top + 30)
        out = []
        for k in range(self.n):
            if k in events:
                if typed < min(len(slots), 2) and not shown:
                    typed += 1
                elif not shown:
                    shown = True
                    cur = (L.side + int(self.rng.integers(40, L.view_w // 2)), results_top + 30)
                else:
                    typed, shown = 1, False
                    cur = (L.side + 20, box_top + 30)
            rects = [(box_top, 4, CHUNK_PITCH + 6, L.view_w - 8, self.style.panel)]
            rects += [(y, x, CHUNK_H, w, self.style.chunk) for y, x, w in slots[:typed]]
            blocks = [(results_top, 40, results)] if shown else []
            out.append(FrameState(cursor=cur, rects=rects, blocks=blocks))
        return band, out


class CopyPaste(_Behaviour):
    """Drag along a line, jump to the paste area, paste, rest; repeated."""

    def states(self):
        L = self.layout
        paste_top = L.view_h - CHUNK_PITCH - 14
        band = self.band(blank=[(paste_top - 6, L.view_h)])
        slots = self.chunk_slots(paste_top, 1)

        def pasted_rects(p: int):
            shown = (p - 1) % len(slots) + 1 if p else 0
            return [(y, x, CHUNK_H, w, self.style.chunk) for y, x, w in slots[:shown]]

        out: list[FrameState] = []
        pasted = 0
        while len(out) < self.n:
            x, y = self.view_point(x1=0.3, y1=0.5)
            for j in range(3):
                out.append(FrameState(cursor=(x + 20 * j, y), rects=pasted_rects(pasted)))
            sy, sx, sw = slots[pasted % len(slots)]
            target = (L.side + sx + sw + 6, sy)
            out.append(FrameState(cursor=target, rects=pasted_rects(pasted)))
            pasted += 1
            for _ in range(1 + int(self.rng.integers(1, 4))):
                out.append(FrameState(cursor=target, rects=pasted_rects(pasted)))
        return band, out[:self.n]


BEHAVIOURS: dict[Action, type[_Behaviour]] = {
    Action.FREEZING: Freezing,
    Action.READING_WITH_SCROLLING: Scrolling,
    Action.READING_WITH_HIGHLIGHTING: Highlighting,
    Action.PROMPTING_GAI: Prompting,
    Action.GROUP_DOCUMENT_CO_EDITING: CoEditing,
    Action.TICKING_ANSWERS: Ticking,
    Action.SEARCHING_INTERNET: Searching,
    Action.COPY_AND_PASTE: CopyPaste,
}


def render_span(rng: np.random.Generator, scene: Scene, action: Action, n: int,
                layout: Layout) -> SpanRender:
    beh = BEHAVIOURS[action](rng, scene, layout, n)
    band, states = beh.states()
    base = chrome(beh.style, layout)
    frames, truth, shifts = [], [], []
    prev = None
    for st in states:
        frames.append(compose(base, band, layout, st))
        truth.append(glyph_center(st.cursor) if st.cursor is not None else None)
        shifts.append(0 if prev is None else st.scroll - prev)
        prev = st.scroll
    return SpanRender(frames, truth, shifts)


# --- corpus specification -------------------------------------------------------------


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Span:
    scene: Scene
    duration_s: int
    action: Action

    def to_dict(self) -> dict:
        return {"scene": self.scene.value, "duration_s": self.duration_s, "action": self.action.value}


@dataclass(frozen=True)
class VideoSpec:
    video_id: str
    timeline: tuple[Span, ...]

    @property
    def length_s(self) -> int:
        return sum(s.duration_s for s in self.timeline)

    def span_bounds(self) -> list[tuple[int, int]]:
        """Inclusive frame ranges of each span."""
        out, t = [], 0
        for s in self.timeline:
            out.append((t, t + s.duration_s - 1))
            t += s.duration_s
        return out


@dataclass(frozen=True)
class CorpusSpec:
    """What to generate. ``videos`` fixes the timelines; otherwise they are drawn from the seed."""

    seed: int = 0
    n_videos: int = 10
    video_length_s: int = 60
    frame_size: tuple[int, int] = (320, 256)
    fixture_tagging: bool = True
    videos: tuple[VideoSpec, ...] | None = None
    window_s: int = 20
    inject_incompatible: float = 0.0
    reply_confidence: float = 0.9

    def __post_init__(self):
        w, h = self.frame_size
        if w < 200 or h < 160:
            raise SpecError(f"frame_size {w}x{h} too small; need at least 200x160")
        if self.n_videos < 1 or self.video_length_s < 1 or self.window_s < 1:
            raise SpecError("n_videos, video_length_s and window_s must be positive")
        if not 0.0 <= self.inject_incompatible <= 1.0:
            raise SpecError("inject_incompatible must be within [0, 1]")
        if not 0.0 <= self.reply_confidence <= 1.0:
            raise SpecError("reply_confidence must be within [0, 1]")
        if self.videos is not None:
            if len(self.videos) != self.n_videos:
                raise SpecError(f"n_videos is {self.n_videos} but {len(self.videos)} timelines given")
            for v in self.videos:
                validate_timeline(v, self.video_length_s)

    @property
    def layout(self) -> Layout:
        return Layout(*self.frame_size)


def validate_timeline(video: VideoSpec, length_s: int | None = None) -> None:
    if not video.timeline:
        raise SpecError(f"{video.video_id}: empty timeline")
    for i, span in enumerate(video.timeline):
        if span.duration_s <= 0:
            raise SpecError(f"{video.video_id}: span {i} has non-positive duration {span.duration_s}")
        if span.scene not in compatible_scenes(span.action):
            raise SpecError(f"{video.video_id}: span {i} action {span.action.value} "
                            f"is incompatible with scene {span.scene.value}")
        if i and video.timeline[i - 1].scene is span.scene:
            raise SpecError(f"{video.video_id}: spans {i - 1} and {i} share scene {span.scene.value}; "
                            "adjacent spans must differ in scene")
    if length_s is not None and video.length_s != length_s:
        raise SpecError(f"{video.video_id}: timeline lasts {video.length_s}s, expected {length_s}s")


def random_timeline(rng: np.random.Generator, video_id: str, length_s: int,
                    min_span: int = 8, max_span: int = 30) -> VideoSpec:
    spans: list[Span] = []
    t = 0
    prev: Scene | None = None
    while t < length_s:
        d = int(rng.integers(min_span, max_span + 1))
        if length_s - (t + d) < min_span:
            d = length_s - t
        scene = SCENES[int(rng.integers(len(SCENES)))]
        while scene is prev:
            scene = SCENES[int(rng.integers(len(SCENES)))]
        options = [a for a in ACTIONS if scene in compatible_scenes(a)]
        action = options[int(rng.integers(len(options)))]
        spans.append(Span(scene, d, action))
        prev = scene
        t += d
    return VideoSpec(video_id, tuple(spans))


def resolve_videos(spec: CorpusSpec) -> tuple[VideoSpec, ...]:
    if spec.videos is not None:
        return spec.videos
    rng = np.random.default_rng([spec.seed, 0])
    return tuple(random_timeline(rng, f"v{i:02d}", spec.video_length_s) for i in range(spec.n_videos))


def _span_from_dict(d: Mapping) -> Span:
    scene = scene_from_name(str(d.get("scene", "")))
    action = action_from_name(str(d.get("action", "")))
    if scene is None or action is None:
        raise SpecError(f"bad span {dict(d)}: unknown scene or action")
    try:
        duration = int(d["duration_s"])
    except (KeyError, TypeError, ValueError):
        raise SpecError(f"bad span {dict(d)}: duration_s must be an integer") from None
    return Span(scene, duration, action)


def spec_from_dict(data: Mapping, seed: int | None = None) -> CorpusSpec:
    known = {"seed", "n_videos", "video_length_s", "frame_size", "fixture_tagging", "videos",
             "window_s", "inject_incompatible", "reply_confidence"}
    unknown = set(data) - known
    if unknown:
        raise SpecError(f"unknown spec keys: {sorted(unknown)}")
    videos = None
    if data.get("videos") is not None:
        videos = tuple(
            VideoSpec(str(v.get("id", f"v{i:02d}")), tuple(_span_from_dict(s) for s in v["timeline"]))
            for i, v in enumerate(data["videos"]))
    length = data.get("video_length_s")
    if length is None and videos:
        length = videos[0].length_s
    kwargs = dict(
        seed=int(data.get("seed", 0) if seed is None else seed),
        n_videos=int(data.get("n_videos", len(videos) if videos else 10)),
        video_length_s=int(length if length is not None else 60),
        frame_size=tuple(int(x) for x in data.get("frame_size", (320, 256))),
        fixture_tagging=bool(data.get("fixture_tagging", True)),
        videos=videos,
        window_s=int(data.get("window_s", 20)),
        inject_incompatible=float(data.get("inject_incompatible", 0.0)),
        reply_confidence=float(data.get("reply_confidence", 0.9)),
    )
    return CorpusSpec(**kwargs)


def load_corpus_spec(path: str | Path, seed: int | None = None) -> CorpusSpec:
    """Read a JSON or YAML corpus spec."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise SpecError(f"cannot parse spec {path}: {exc}") from None
    if not isinstance(data, Mapping):
        raise SpecError(f"spec {path} must be a mapping")
    return spec_from_dict(data, seed)


def spec_to_dict(spec: CorpusSpec) -> dict:
    return {
        "seed": spec.seed,
        "n_videos": spec.n_videos,
        "video_length_s": spec.video_length_s,
        "frame_size": list(spec.frame_size),
        "fixture_tagging": spec.fixture_tagging,
        "window_s": spec.window_s,
        "inject_incompatible": spec.inject_incompatible,
        "reply_confidence": spec.reply_confidence,
        "videos": [{"id": v.video_id, "timeline": [s.to_dict() for s in v.timeline]}
                   for v in resolve_videos(spec)],
    }


# --- rendering and gold -------------------------------------------------------------


@dataclass
class RenderedVideo:
    video: VideoSpec
    frames: list[np.ndarray]
    cursor_truth: list[tuple[float, float] | None]
    shifts: list[int]

    @property
    def keyframes(self) -> list[int]:
        return [lo for lo, _ in self.video.span_bounds()]

    def sequence(self) -> FrameSequence:
        return FrameSequence.from_arrays(self.frames, FPS, self.video.video_id)


def render_video(video: VideoSpec, layout: Layout, seed: int, index: int = 0) -> RenderedVideo:
    frames, truth, shifts = [], [], []
    for k, span in enumerate(video.timeline):
        rng = np.random.default_rng([seed, 1, index, k])
        r = render_span(rng, span.scene, span.action, span.duration_s, layout)
        frames += r.frames
        truth += r.cursor_truth
        shifts += [0] + r.shifts[1:]
    return RenderedVideo(video, frames, truth, shifts)


def _union_label(spans: Sequence[Span]) -> tuple[frozenset[Scene], frozenset[Action]]:
    return frozenset(s.scene for s in spans), frozenset(s.action for s in spans)


def gold_records(video: VideoSpec, window_s: int = 20) -> list[LabelRecord]:
    """One record per evaluation unit: the union of spans overlapping it."""
    n = video.length_s
    per_unit = max(1, int(round(window_s * FPS)))
    bounds = video.span_bounds()
    out = []
    for k, (lo, hi) in enumerate(window_bounds(n, per_unit)):
        spans = [s for s, (a, b) in zip(video.timeline, bounds) if a <= hi - 1 and b >= lo]
        scenes, actions = _union_label(spans)
        out.append(LabelRecord(unit_id_for(video.video_id, k), scenes, actions))
    return out


def label_reply(scenes, actions, confidence: float, evidence: str = "synthetic") -> str:
    scenes = [s for s in SCENES if s in scenes]
    actions = [a for a in ACTIONS if a in actions]
    return json.dumps({
        "scenes": [s.value for s in scenes],
        "actions": [a.value for a in actions],
        "confidences": {a.value: confidence for a in actions},
        "evidence": {a.value: f"{evidence} {a.value}" for a in actions},
    })


def _react_step(thought: str, action: str, action_input) -> str:
    return json.dumps({"thought": thought, "action": action, "action_input": action_input})


def _incompatible_action(rng: np.random.Generator, scene: Scene) -> Action:
    options = [a for a in ACTIONS if scene not in compatible_scenes(a)]
    return options[int(rng.integers(len(options)))]


def mock_rules(video: VideoSpec, spec: CorpusSpec, index: int = 0) -> list[tuple[str, str]]:
    """Cooperative replies for every prompt the three strategies send for this video."""
    conf = spec.reply_confidence
    rules: list[tuple[str, str]] = []
    rng = np.random.default_rng([spec.seed, 2, index])
    for (lo, hi), span in zip(video.span_bounds(), video.timeline):
        rules.append((fixture_tag(f"{video.video_id}/scene/{lo}"),
                      json.dumps({"scenes": [span.scene.value], "actions": []})))
        actions = {span.action}
        if rng.random() < spec.inject_incompatible:
            actions.add(_incompatible_action(rng, span.scene))
        rules.append((fixture_tag(f"{video.video_id}/icvp/{lo}-{hi}"),
                      label_reply({span.scene}, actions, conf, "scripted")))
    for rec in gold_records(video, spec.window_s):
        reply = label_reply(rec.scenes, rec.actions, conf, "scripted")
        uid = rec.unit_id
        rules.append((fixture_tag(uid), reply))
        rules.append((fixture_tag(f"{uid}/classify"), reply))
        rules.append((fixture_tag(f"{uid}/react/1"),
                      _react_step("Check where the scene changes inside the clip.", "SegmentProbe", "")))
        rules.append((fixture_tag(f"{uid}/react/2"),
                      _react_step("Look at how the cursor moves.", "CursorProbe", "")))
        rules.append((fixture_tag(f"{uid}/react/3"),
                      _react_step("Evidence is consistent; finish.", "Finish", json.loads(reply))))
    return rules


DEFAULT_REPLY = json.dumps({"scenes": [], "actions": []})


def mock_script_for(videos: Sequence[VideoSpec], spec: CorpusSpec) -> MockScript:
    rules: list[tuple[str, str]] = []
    for i, v in enumerate(videos):
        rules += mock_rules(v, spec, i)
    return MockScript(rules, DEFAULT_REPLY)


def _write_frames(frames: Sequence[np.ndarray], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, px in enumerate(frames):
        Image.fromarray(px, "RGB").save(directory / f"frame_{i:05d}.png", optimize=False)


@dataclass
class GeneratedCorpus:
    root: Path
    videos: tuple[VideoSpec, ...]
    gold: list[LabelRecord]
    script: MockScript | None

    @property
    def gold_path(self) -> Path:
        return self.root / "gold.tsv"

    @property
    def script_path(self) -> Path:
        return self.root / "mock_script.tsv"

    @property
    def video_dir(self) -> Path:
        return self.root / "videos"


def generate_corpus(spec: CorpusSpec, out_dir: str | Path, jobs: int = 4) -> GeneratedCorpus:
    """Render every video, then write gold labels, the mock script and ground truth.

    Layout: ``videos/<id>/frame_NNNNN.png``, ``gold.tsv``, ``mock_script.tsv``
    (only with fixture tagging), ``ground_truth.json`` and ``corpus_spec.json``.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    videos = resolve_videos(spec)
    layout = spec.layout

    def work(i: int) -> dict:
        r = render_video(videos[i], layout, spec.seed, i)
        _write_frames(r.frames, root / "videos" / videos[i].video_id)
        return {
            "keyframes": r.keyframes,
            "spans": [dict(s.to_dict(), start=lo, end=hi)
                      for s, (lo, hi) in zip(videos[i].timeline, videos[i].span_bounds())],
            "cursor": [None if c is None else [round(c[0], 3), round(c[1], 3)] for c in r.cursor_truth],
            "shifts": r.shifts,
        }

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        truths = list(pool.map(work, range(len(videos))))
    gold = [rec for v in videos for rec in gold_records(v, spec.window_s)]
    write_labels(root / "gold.tsv", gold)
    script = None
    if spec.fixture_tagging:
        script = mock_script_for(videos, spec)
        script.save(root / "mock_script.tsv")
    truth = {v.video_id: t for v, t in zip(videos, truths)}
    (root / "ground_truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    (root / "corpus_spec.json").write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")
    return GeneratedCorpus(root, videos, gold, script)


def corpus_digest(root: str | Path) -> str:
    """SHA-256 over every file's relative path and bytes, in sorted order."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# --- vision fixtures ----------------------------------------------------------------


@dataclass
class CursorFixture:
    sequence: FrameSequence
    truth: list[tuple[int, float, float]]  # glyph centroid for frames where the cursor moved
    pattern: MotionPattern
    scroll: int


def _fixture_frames(rng: np.random.Generator, layout: Layout, positions, scroll: int,
                    scene: Scene | None = None) -> tuple[list[np.ndarray], Scene]:
    scene = scene or SCENES[int(rng.integers(len(SCENES)))]
    style = STYLES[scene]
    band = text_band(rng, style, layout.view_h + abs(scroll) * len(positions) + 2, layout.view_w)
    base = chrome(style, layout)
    frames = []
    for k, pos in enumerate(positions):
        off = k * scroll if scroll >= 0 else (len(positions) - 1 - k) * -scroll
        frames.append(compose(base, band, layout, FrameState(off, pos)))
    return frames, scene


def _clip(layout: Layout, x: float, y: float) -> tuple[int, int]:
    x = int(np.clip(round(x), layout.side, layout.side + layout.view_w - GLYPH.shape[1] - 1))
    y = int(np.clip(round(y), 0, layout.height - GLYPH.shape[0] - 1))
    return x, y


def cursor_path(rng: np.random.Generator, pattern: MotionPattern, n: int, layout: Layout):
    """Glyph positions realising ``pattern`` with steps large enough not to overlap."""
    L = layout
    x0 = L.side + 10
    y0 = 10
    if pattern is MotionPattern.STATIC or pattern is MotionPattern.NONE:
        p = _clip(L, rng.uniform(x0, x0 + L.view_w * 0.7), rng.uniform(y0, y0 + L.view_h * 0.7))
        return [p] * n
    if pattern is MotionPattern.LINEAR_HORIZONTAL:
        step = rng.uniform(14, max(15, (L.view_w - 30) / max(1, n - 1)))
        y = rng.uniform(y0, y0 + L.view_h * 0.7)
        return [_clip(L, x0 + k * step, y + rng.uniform(-1, 1)) for k in range(n)]
    if pattern is MotionPattern.LINEAR_VERTICAL:
        step = rng.uniform(19, max(20, (L.view_h - 40) / max(1, n - 1)))
        x = rng.uniform(x0, x0 + L.view_w * 0.7)
        return [_clip(L, x + rng.uniform(-1, 1), y0 + k * step) for k in range(n)]
    # Jump: far-apart random points, forcing a reversal so neither axis is monotone
    pts = []
    for k in range(n):
        while True:
            p = _clip(L, rng.uniform(x0, x0 + L.view_w * 0.8), rng.uniform(y0, y0 + L.view_h * 0.8))
            if not pts or (abs(p[0] - pts[-1][0]) >= 30 and abs(p[1] - pts[-1][1]) >= 30):
                break
        pts.append(p)
    if len(pts) >= 3:
        pts[2] = (pts[0][0], pts[0][1]) if abs(pts[1][0] - pts[0][0]) >= 30 else pts[2]
    return pts


def cursor_fixture(seed: int, pattern: MotionPattern | None = None, n_frames: int | None = None,
                   layout: Layout = Layout(320, 256), scroll: int | None = None) -> CursorFixture:
    """A short clip with a known cursor path; Static cursors sit on scrolling content."""
    rng = np.random.default_rng([seed, 3])
    patterns = [MotionPattern.STATIC, MotionPattern.LINEAR_HORIZONTAL, MotionPattern.LINEAR_VERTICAL,
                MotionPattern.JUMP, MotionPattern.NONE]
    if pattern is None:
        pattern = patterns[int(rng.integers(len(patterns)))]
    n = n_frames or int(rng.integers(5, 9))
    if scroll is None:
        if pattern is MotionPattern.STATIC:
            # at least a glyph height, so the cursor never overlaps its scrolled ghost
            scroll = int(rng.integers(GLYPH.shape[0], 31)) * (1 if rng.random() < 0.5 else -1)
        elif pattern is MotionPattern.NONE:
            scroll = 0
        else:
            scroll = int(rng.integers(6, 16)) if rng.random() < 0.3 else 0
    positions = cursor_path(rng, pattern, n, layout)
    frames, _ = _fixture_frames(rng, layout, positions, scroll)
    seq = FrameSequence.from_arrays(frames, FPS, f"cursor{seed}")
    truth = []
    for k in range(1, n):
        if positions[k] != positions[k - 1] or scroll:
            truth.append((k, *glyph_center(positions[k])))
    return CursorFixture(seq, truth, pattern, scroll)


@dataclass
class ShiftFixture:
    a: Frame
    b: Frame
    offset: int


def shift_fixture(seed: int, offset: int | None = None, layout: Layout = Layout(320, 256)) -> ShiftFixture:
    """Two frames of one scene whose content differs by a vertical scroll of ``offset`` px."""
    rng = np.random.default_rng([seed, 4])
    if offset is None:
        offset = int(rng.integers(4, 41)) * (1 if rng.random() < 0.5 else -1)
    scene = SCENES[int(rng.integers(len(SCENES)))]
    style = STYLES[scene]
    band = text_band(rng, style, layout.view_h + abs(offset) + 2, layout.view_w)
    base = chrome(style, layout)
    start = 0 if offset >= 0 else -offset
    cur = _clip(layout, rng.uniform(layout.side, layout.width), rng.uniform(0, layout.height))
    a = compose(base, band, layout, FrameState(start, cur))
    b = compose(base, band, layout, FrameState(start + offset, cur))
    return ShiftFixture(Frame(0, 0.0, a), Frame(1, 1.0, b), offset)


def keyframe_fixture(seed: int, length_s: int | None = None,
                     layout: Layout = Layout(320, 256)) -> RenderedVideo:
    rng = np.random.default_rng([seed, 5])
    length = length_s or int(rng.integers(20, 61))
    video = random_timeline(rng, f"kf{seed}", length, min_span=3, max_span=15)
    return render_video(video, layout, seed)
