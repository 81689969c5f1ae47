"""Frame-sequence loading and fixed-window segmentation into evaluation units."""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from PIL import Image

from .core import EvaluationUnit

log = logging.getLogger(__name__)


class IngestError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB frame. ``pixels`` is a read-only ``(height, width, 3)`` uint8 array."""

    index: int
    timestamp_s: float
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise IngestError(f"frame {self.index}: expected (h, w, 3) pixels, got {px.shape}")
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @cached_property
    def gray(self) -> np.ndarray:
        """Unweighted channel mean rounded down, as int16."""
        g = self.pixels.astype(np.int16).sum(axis=2) // 3
        g.flags.writeable = False
        return g

    def with_pixels(self, pixels: np.ndarray) -> Frame:
        return Frame(self.index, self.timestamp_s, pixels)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: tuple[Frame, ...]
    fps: float
    source_id: str = "video"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.fps > 0:
            raise IngestError("fps must be positive")
        if self.frames:
            shape = self.frames[0].pixels.shape
            for f in self.frames[1:]:
                if f.pixels.shape != shape:
                    raise IngestError(f"frame {f.index} has shape {f.pixels.shape}, expected {shape}")
            ts = [f.timestamp_s for f in self.frames]
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise IngestError("frame timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i: int) -> Frame:
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    def subsequence(self, start: int, end: int) -> FrameSequence:
        """Frames ``start..end`` inclusive, keeping their original indices."""
        return FrameSequence(self.frames[start:end + 1], self.fps, self.source_id)

    @classmethod
    def from_arrays(cls, arrays, fps: float = 1.0, source_id: str = "video") -> FrameSequence:
        return cls(tuple(Frame(i, i / fps, a) for i, a in enumerate(arrays)), fps, source_id)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise IngestError(f"unreadable image {path}: {exc}") from None


def load_frame_directory(directory: Path, fps: float, source_id: str | None = None) -> FrameSequence:
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and p.is_file())
    if not files:
        raise IngestError(f"no frames found in {directory}")
    frames = []
    shape = None
    for i, path in enumerate(files):
        px = _read_png(path)
        if shape is None:
            shape = px.shape
        elif px.shape != shape:
            raise IngestError(
                f"{path.name}: dimensions {px.shape[1]}x{px.shape[0]} differ from "
                f"{shape[1]}x{shape[0]} of {files[0].name}"
            )
        frames.append(Frame(i, i / fps, px))
    return FrameSequence(tuple(frames), fps, source_id or directory.name)


def decode_video(source: Path, out_dir: Path, fps: float, command: str) -> None:
    """Run an external decoder that writes PNG frames into ``out_dir``.

    ``command`` is a template with ``{input}``, ``{output}`` and ``{fps}``
    placeholders, e.g. ``ffmpeg -loglevel error -i {input} -vf fps={fps}
    {output}/frame_%06d.png``.
    """
    argv = [part.format(input=str(source), output=str(out_dir), fps=fps) for part in shlex.split(command)]
    log.info("decoding %s: %s", source, " ".join(argv))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
    except OSError as exc:
        raise IngestError(f"decoder failed to start: {exc}") from None
    if proc.returncode != 0:
        raise IngestError(f"decoder exited with {proc.returncode}: {proc.stderr.strip()[:500]}")


def load_frame_sequence(source: str | Path, fps: float = 1.0, decoder: str | None = None) -> FrameSequence:
    """Load a directory of PNG frames, or decode a video file first when ``decoder`` is set.

    Frames are taken in lexicographic filename order and stamped
    ``index / fps``; the caller is responsible for the files already being
    sampled at ``fps``.
    """
    if not fps > 0:
        raise IngestError("fps must be positive")
    source = Path(source)
    if not source.exists():
        raise IngestError(f"source not found: {source}")
    if source.is_dir():
        return load_frame_directory(source, fps)
    if decoder is None:
        raise IngestError(f"{source} is a file; configure a decoder command to read video files")
    with tempfile.TemporaryDirectory(prefix="icap-frames-") as tmp:
        decode_video(source, Path(tmp), fps, decoder)
        return load_frame_directory(Path(tmp), fps, source_id=source.stem)


def segment_fixed(seq: FrameSequence, window_s: float = 20.0) -> list[EvaluationUnit]:
    """Split a sequence into consecutive ``window_s`` units.

    A trailing partial window is its own unit when it lasts at least half a
    window; otherwise its frames are appended to the previous unit.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    n = len(seq)
    if n == 0:
        raise ValueError("cannot segment an empty sequence")
    per_unit = max(1, int(round(window_s * seq.fps)))
    units = []
    for k, (lo, hi) in enumerate(window_bounds(n, per_unit)):
        units.append(EvaluationUnit(
            unit_id=unit_id_for(seq.source_id, k),
            start_s=seq[lo].timestamp_s,
            frame_indices=tuple(range(lo, hi)),
            duration_s=(hi - lo) / seq.fps,
        ))
    return units


def unit_id_for(source_id: str, k: int) -> str:
    return f"{source_id}_u{k:02d}"


def window_bounds(n_frames: int, per_unit: int) -> list[tuple[int, int]]:
    """Half-open ``(lo, hi)`` frame ranges produced by the tail-merging rule."""
    bounds = [(s, min(s + per_unit, n_frames)) for s in range(0, n_frames, per_unit)]
    if len(bounds) > 1 and (bounds[-1][1] - bounds[-1][0]) * 2 < per_unit:
        tail = bounds.pop()
        bounds[-1] = (bounds[-1][0], tail[1])
    return bounds
