"""Run configuration: one file (JSON or YAML) plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import yaml

from .vision import DEFAULT_VISION, VisionConfig

MODES = ("single", "workflow", "react")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    """Knobs shared by the three coding strategies."""

    model_id: str = "mock-vlm"
    max_images: int = 20
    max_tokens: int = 1024
    n_exemplars: int = 3
    icvp_stride: int = 4
    override_confidence: float = 0.85
    reflection_penalty: float = 0.3
    review_threshold: float = 0.5
    max_steps: int = 8
    fixture_tags: bool = True
    prompt_dir: str | None = None
    vision: VisionConfig = DEFAULT_VISION

    def __post_init__(self):
        if self.max_images < 1:
            raise ConfigError("max_images must be at least 1")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be at least 1")
        if self.n_exemplars < 1:
            raise ConfigError("n_exemplars must be at least 1")
        if self.icvp_stride < 1:
            raise ConfigError("icvp_stride must be at least 1")
        if not 1 <= self.max_steps <= 64:
            raise ConfigError("max_steps must be within 1..64")
        for name in ("override_confidence", "reflection_penalty", "review_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1]")


DEFAULT_AGENT = AgentConfig()


@dataclass(frozen=True)
class RunConfig:
    mode: str = "workflow"
    endpoint: str | None = None
    credentials_env: str = "ICAP_API_KEY"
    mock_script: str | None = None
    fps: float = 1.0
    window_s: float = 20.0
    jobs: int = 4
    rate_limit_rpm: float | None = None
    timeout_s: float = 120.0
    decoder: str | None = None
    seed: int = 0
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.fps <= 0 or self.window_s <= 0:
            raise ConfigError("fps and window_s must be positive")
        if self.window_s * self.fps < 1:
            raise ConfigError("a window must hold at least one frame")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.rate_limit_rpm is not None and self.rate_limit_rpm <= 0:
            raise ConfigError("rate_limit_rpm must be positive")
        if self.timeout_s <= 0:
            raise ConfigError("timeout_s must be positive")
        if self.mock_script is None and not self.endpoint:
            raise ConfigError("either a mock script or an endpoint is required")

    @property
    def mock(self) -> bool:
        return self.mock_script is not None

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: Mapping, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"config {path} must be a mapping")
    return dict(data)


def build_config(data: Mapping, overrides: Mapping | None = None) -> RunConfig:
    """Assemble a RunConfig from file data (sections ``agent`` and ``vision``) and overrides.

    Override keys may name either run-level or agent-level fields; ``None``
    values are ignored.
    """
    data = dict(data)
    agent_data = dict(data.pop("agent", None) or {})
    vision_data = dict(data.pop("vision", None) or agent_data.pop("vision", None) or {})
    agent_names = {f.name for f in fields(AgentConfig)}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in agent_names:
            agent_data[key] = value
        else:
            data[key] = value
    vision = _build(VisionConfig, vision_data, "vision")
    agent = _build(AgentConfig, dict(agent_data, vision=vision), "agent")
    return _build(RunConfig, dict(data, agent=agent), "run")


def with_agent(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, agent=replace(cfg.agent, **changes))
