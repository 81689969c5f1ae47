"""Deterministic vision kernels over RGB frames.

Grayscale throughout is the unweighted channel mean rounded down, so every
number here can be reproduced by hand from the raw pixels.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import ndimage

from .ingest import Frame, FrameSequence


@dataclass(frozen=True)
class VisionConfig:
    diff_threshold: int = 25
    cursor_min_area: int = 8
    cursor_max_area: int = 900
    keyframe_tau: float = 0.12
    max_shift: int = 120
    min_shift: int = 4
    min_correlation: float = 0.9
    static_radius: float = 8.0
    directionality: float = 0.7
    max_backtrack: float = 0.10
    localized_min_score: float = 0.005
    localized_max_area: float = 0.30
    overlay_thickness: int = 3

    def __post_init__(self):
        if not 0 <= self.diff_threshold <= 255:
            raise ValueError("diff_threshold must be within 0..255")
        if not 0 < self.cursor_min_area <= self.cursor_max_area:
            raise ValueError("cursor area band must satisfy 0 < min <= max")
        if not 0.0 <= self.keyframe_tau <= 1.0:
            raise ValueError("keyframe_tau must be within [0, 1]")
        if not -1.0 <= self.min_correlation <= 1.0:
            raise ValueError("min_correlation must be within [-1, 1]")
        if not 0.5 <= self.directionality <= 1.0:
            raise ValueError("directionality must be within [0.5, 1]")
        if self.min_shift < 1 or self.max_shift < 0:
            raise ValueError("shift bounds must be non-negative, min_shift >= 1")


DEFAULT_VISION = VisionConfig()


class MotionPattern(str, Enum):
    STATIC = "Static"
    LINEAR_HORIZONTAL = "LinearHorizontal"
    LINEAR_VERTICAL = "LinearVertical"
    JUMP = "Jump"
    NONE = "None"


@dataclass(frozen=True)
class ShiftResult:
    offset_px: int
    correlation: float
    detected: bool


@dataclass(frozen=True)
class CursorTrajectory:
    points: tuple[tuple[int, float, float], ...]
    pattern: MotionPattern
    activity_ratio: float

    def summary(self) -> str:
        if not self.points:
            return "pattern: None; activity_ratio: 0.00; no cursor localized"
        xs = [p[1] for p in self.points]
        ys = [p[2] for p in self.points]
        path = ", ".join(f"f{i}:({x:.0f},{y:.0f})" for i, x, y in self.points[:12])
        if len(self.points) > 12:
            path += ", ..."
        return (
            f"pattern: {self.pattern.value}; activity_ratio: {self.activity_ratio:.2f}; "
            f"points: {len(self.points)}; x range {min(xs):.0f}-{max(xs):.0f}, "
            f"y range {min(ys):.0f}-{max(ys):.0f}; path: {path}"
        )


@dataclass(frozen=True)
class AttentionBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"attention box needs positive size, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError("attention box origin must be non-negative")


def _check_same_size(a: Frame, b: Frame) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"frame size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")


def frame_diff_score(a: Frame, b: Frame) -> float:
    """Mean absolute grayscale difference, scaled to [0, 1]."""
    _check_same_size(a, b)
    return float(np.abs(a.gray - b.gray).mean() / 255.0)


def _row_profile(frame: Frame) -> np.ndarray:
    return frame.gray.mean(axis=1)


def _ncc_by_offset(pa: np.ndarray, pb: np.ndarray, max_shift: int) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlation of overlapping profiles for every offset in scan order.

    Offset ``d`` pairs ``a[y + d]`` with ``b[y]`` (content moved up by ``d``).
    Scan order is 0, 1, -1, 2, -2, ... so the first maximum is the
    tie-break winner.
    """
    n = len(pa)
    offsets = np.array([0] + [s * m for m in range(1, max_shift + 1) for s in (1, -1)])
    xcorr = np.correlate(pa, pb, mode="full")
    ca = np.concatenate(([0.0], np.cumsum(pa)))
    cb = np.concatenate(([0.0], np.cumsum(pb)))
    ca2 = np.concatenate(([0.0], np.cumsum(pa * pa)))
    cb2 = np.concatenate(([0.0], np.cumsum(pb * pb)))
    pos = offsets >= 0
    d = np.abs(offsets)
    m = n - d
    a_lo = np.where(pos, d, 0)
    a_hi = np.where(pos, n, n - d)
    b_lo = np.where(pos, 0, d)
    b_hi = np.where(pos, n - d, n)
    sx = ca[a_hi] - ca[a_lo]
    sy = cb[b_hi] - cb[b_lo]
    sxx = ca2[a_hi] - ca2[a_lo] - sx * sx / m
    syy = cb2[b_hi] - cb2[b_lo] - sy * sy / m
    sxy = xcorr[offsets + n - 1] - sx * sy / m
    denom = np.sqrt(np.clip(sxx, 0, None) * np.clip(syy, 0, None))
    scale = np.maximum(1.0, np.abs(ca2[n]) + np.abs(cb2[n]))
    ok = denom > 1e-9 * scale
    corr = np.zeros(len(offsets))
    corr[ok] = np.clip(sxy[ok] / denom[ok], -1.0, 1.0)
    return offsets, corr


def detect_vertical_shift(a: Frame, b: Frame, max_shift: int = 120,
                          config: VisionConfig = DEFAULT_VISION) -> ShiftResult:
    """Estimate the vertical content offset between two frames.

    Positive offsets mean content moved up from ``a`` to ``b``. The offset
    maximising the normalised cross-correlation of the overlapping row
    profiles wins; near-ties go to the smaller magnitude, then the positive
    sign.
    """
    _check_same_size(a, b)
    if max_shift < 0 or 2 * max_shift >= a.height:
        raise ValueError(f"max_shift {max_shift} must be below half the frame height {a.height}")
    offsets, corr = _ncc_by_offset(_row_profile(a), _row_profile(b), max_shift)
    best = int(np.argmax(corr >= corr.max() - 1e-9))
    d, c = int(offsets[best]), float(corr[best])
    detected = abs(d) >= config.min_shift and c >= config.min_correlation
    return ShiftResult(d, c, detected)


def _shift_for_sequence(frame: Frame, config: VisionConfig) -> int:
    return max(0, min(config.max_shift, (frame.height - 1) // 2))


def compensated_difference(a: Frame, b: Frame, offset: int) -> tuple[np.ndarray, np.ndarray]:
    """``|gray(b) - gray(a)|`` after undoing a vertical content offset.

    Returns the difference and the re-aligned grayscale of ``a``. Rows of
    ``b`` with no counterpart in ``a`` are reported as unchanged.
    """
    ga, gb = a.gray, b.gray
    h = ga.shape[0]
    aligned = np.zeros_like(ga)
    valid = np.zeros(h, dtype=bool)
    if offset >= 0:
        aligned[:h - offset] = ga[offset:]
        valid[:h - offset] = True
    else:
        aligned[-offset:] = ga[:h + offset]
        valid[-offset:] = True
    diff = np.abs(gb - aligned)
    diff[~valid] = 0
    return diff, aligned


def _cursor_candidates(gb: np.ndarray, ga: np.ndarray, mask: np.ndarray,
                       config: VisionConfig) -> list[tuple[float, float, int]]:
    """Return ``(x, y, area)`` for components that look like an object appearing in ``b``."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())
    out = []
    h, w = mask.shape
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[k])
        if not config.cursor_min_area <= area <= config.cursor_max_area:
            continue
        y0, y1 = max(0, sl[0].start - 2), min(h, sl[0].stop + 2)
        x0, x1 = max(0, sl[1].start - 2), min(w, sl[1].stop + 2)
        comp = labels[y0:y1, x0:x1] == k
        ring = ~mask[y0:y1, x0:x1]
        bg_px = gb[y0:y1, x0:x1][ring]
        bg = float(np.median(bg_px)) if bg_px.size else float(np.median(gb))
        sub_b = gb[y0:y1, x0:x1]
        sub_a = ga[y0:y1, x0:x1]
        appeared = comp & (np.abs(sub_b - bg) > np.abs(sub_a - bg))
        if not appeared.any():
            continue
        ys, xs = np.nonzero(appeared)
        out.append((float(xs.mean() + x0), float(ys.mean() + y0), area))
    return out


def _pick(candidates, ref: tuple[float, float]):
    rx, ry = ref
    return min(candidates, key=lambda c: (round(np.hypot(c[0] - rx, c[1] - ry), 9), c[2], c[1], c[0]))


def detect_cursor(seq: FrameSequence, prior: tuple[float, float] | None = None,
                  config: VisionConfig = DEFAULT_VISION) -> CursorTrajectory:
    """Track the mouse cursor by differencing consecutive frames.

    Each pair is first compensated for any detected vertical scroll, then
    thresholded; connected blobs inside the cursor area band whose pixels
    look like something appearing in the later frame are candidates, and the
    one nearest the previous cursor point is kept. Pairs whose compensated
    change still exceeds the keyframe threshold are scene cuts and contribute
    nothing.
    """
    if len(seq) < 2:
        raise ValueError("cursor detection needs at least two frames")
    max_shift = _shift_for_sequence(seq[0], config)
    points: list[tuple[int, float, float]] = []
    last = prior
    for a, b in zip(seq.frames, seq.frames[1:]):
        shift = detect_vertical_shift(a, b, max_shift, config)
        offset = shift.offset_px if shift.detected else 0
        diff, aligned = compensated_difference(a, b, offset)
        if diff.mean() / 255.0 > config.keyframe_tau:
            continue
        mask = diff > config.diff_threshold
        if not mask.any():
            continue
        cands = _cursor_candidates(b.gray, aligned, mask, config)
        if not cands:
            continue
        if last is None:
            ys, xs = np.nonzero(mask)
            ref = (float(xs.mean()), float(ys.mean()))
        else:
            ref = last
        x, y, _ = _pick(cands, ref)
        points.append((b.index, x, y))
        last = (x, y)
    activity = len(points) / (len(seq) - 1)
    pattern = classify_motion_pattern(points, config)
    return CursorTrajectory(tuple(points), pattern, activity)


def classify_motion_pattern(traj: CursorTrajectory | Sequence[tuple[int, float, float]],
                            config: VisionConfig = DEFAULT_VISION) -> MotionPattern:
    points = traj.points if isinstance(traj, CursorTrajectory) else traj
    if len(points) < 2:
        return MotionPattern.NONE
    xy = np.array([(p[1], p[2]) for p in points], dtype=float)
    spread = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)).max()
    if spread < config.static_radius:
        return MotionPattern.STATIC
    steps = np.diff(xy, axis=0)
    adx, ady = np.abs(steps[:, 0]).sum(), np.abs(steps[:, 1]).sum()
    total = adx + ady

    def monotone(component: np.ndarray, travelled: float) -> bool:
        forward = component[component > 0].sum()
        backward = -component[component < 0].sum()
        return min(forward, backward) <= config.max_backtrack * travelled

    if adx >= config.directionality * total and monotone(steps[:, 0], adx):
        return MotionPattern.LINEAR_HORIZONTAL
    if ady >= config.directionality * total and monotone(steps[:, 1], ady):
        return MotionPattern.LINEAR_VERTICAL
    return MotionPattern.JUMP


def detect_keyframes(seq: FrameSequence, tau: float = 0.12) -> list[int]:
    """Positions (0-based) where the frame differs from its predecessor by more than ``tau``."""
    if len(seq) == 0:
        raise ValueError("keyframe detection needs at least one frame")
    keys = [0]
    for i in range(1, len(seq)):
        if frame_diff_score(seq[i - 1], seq[i]) > tau:
            keys.append(i)
    return keys


def overlay_highlight(frame: Frame, box: AttentionBox, thickness: int = 3,
                      color: tuple[int, int, int] = (255, 0, 0)) -> Frame:
    """Copy of ``frame`` with a rectangle outline drawn just inside ``box``."""
    if box.x + box.w > frame.width or box.y + box.h > frame.height:
        raise ValueError(f"attention box {box} exceeds {frame.width}x{frame.height} frame")
    px = frame.pixels.copy()
    t = thickness
    x0, y0, x1, y1 = box.x, box.y, box.x + box.w, box.y + box.h
    px[y0:min(y0 + t, y1), x0:x1] = color
    px[max(y1 - t, y0):y1, x0:x1] = color
    px[y0:y1, x0:min(x0 + t, x1)] = color
    px[y0:y1, max(x1 - t, x0):x1] = color
    return frame.with_pixels(px)


def activity_box(traj: CursorTrajectory, width: int, height: int, pad: int = 24) -> AttentionBox | None:
    """Padded bounding box of the cursor points, clipped to the frame."""
    if not traj.points:
        return None
    xs = [p[1] for p in traj.points]
    ys = [p[2] for p in traj.points]
    x0 = max(0, int(np.floor(min(xs))) - pad)
    y0 = max(0, int(np.floor(min(ys))) - pad)
    x1 = min(width, int(np.ceil(max(xs))) + pad + 1)
    y1 = min(height, int(np.ceil(max(ys))) + pad + 1)
    return AttentionBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class PairEvidence:
    """Change measurements for one consecutive frame pair."""

    diff_score: float
    shift: ShiftResult
    changed_fraction: float
    localized: bool


def pair_evidence(a: Frame, b: Frame, config: VisionConfig = DEFAULT_VISION) -> PairEvidence:
    """Classify the change between two frames.

    A change is localized when it is visible (score at least
    ``localized_min_score``), the bounding box of changed pixels covers less
    than ``localized_max_area`` of the frame, and it is not a scroll.
    """
    score = frame_diff_score(a, b)
    shift = detect_vertical_shift(a, b, _shift_for_sequence(a, config), config)
    changed = np.abs(a.gray - b.gray) > config.diff_threshold
    if changed.any():
        ys, xs = np.nonzero(changed)
        frac = (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1) / changed.size
    else:
        frac = 0.0
    localized = (score >= config.localized_min_score and frac < config.localized_max_area
                 and not shift.detected)
    return PairEvidence(score, shift, float(frac), localized)
