"""Prompt templates (plain files, ``$name`` placeholders) and image selection."""
from __future__ import annotations

import json
import string
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import Scene
from .vlm import fixture_tag

PROMPT_DIR = Path(__file__).parent / "prompts"


class PromptError(ValueError):
    pass


@lru_cache(maxsize=64)
def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8").rstrip("\n")
    except OSError as exc:
        raise PromptError(f"cannot read prompt template {path}: {exc}") from None


def template_path(name: str, directory: str | Path | None = None) -> Path:
    """Look in ``directory`` first, then fall back to the bundled templates."""
    if directory is not None:
        p = Path(directory) / name
        if p.exists():
            return p
    return PROMPT_DIR / name


def load_text(name: str, directory: str | Path | None = None) -> str:
    return _read(template_path(name, directory))


def render(name: str, directory: str | Path | None = None, **values) -> str:
    try:
        return string.Template(load_text(name, directory)).substitute(values)
    except KeyError as exc:
        raise PromptError(f"template {name} needs a value for {exc}") from None


def taxonomy(directory=None) -> str:
    return load_text("taxonomy.txt", directory)


def output_format(directory=None) -> str:
    return load_text("output_format.txt", directory)


def scene_guidance(scene: Scene, directory=None) -> str:
    return load_text(f"guidance_{scene.value}.txt", directory)


def exemplars(k: int, directory=None) -> list[tuple[str, dict]]:
    """The first ``k`` worked examples as ``(description, label object)``."""
    data = json.loads(load_text("exemplars.json", directory))
    if not 1 <= k <= len(data):
        raise PromptError(f"need between 1 and {len(data)} exemplars, got {k}")
    return [(e["description"], e["label"]) for e in data[:k]]


def tag(key: str, enabled: bool) -> str:
    return fixture_tag(key) if enabled else ""


def sample_positions(n: int, stride: int = 1, cap: int | None = None) -> list[int]:
    """Every ``stride``-th position of ``n``, thinned evenly to at most ``cap``."""
    if n <= 0:
        return []
    if stride < 1:
        raise ValueError("stride must be at least 1")
    pos = list(range(0, n, stride))
    if cap is not None and len(pos) > cap:
        if cap < 1:
            raise ValueError("image cap must be at least 1")
        picks = np.linspace(0, len(pos) - 1, cap).round().astype(int)
        pos = [pos[i] for i in picks]
    return pos
