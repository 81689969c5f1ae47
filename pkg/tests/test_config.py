import json

import pytest

from icapcoder.config import AgentConfig, ConfigError, RunConfig, build_config, load_config_file, with_agent


def test_defaults():
    cfg = RunConfig(mock_script="s.tsv")
    assert cfg.mode == "workflow" and cfg.fps == 1.0 and cfg.window_s == 20.0 and cfg.mock
    a = cfg.agent
    assert (a.max_images, a.max_steps, a.reflection_penalty, a.review_threshold, a.override_confidence) == (
        20, 8, 0.3, 0.5, 0.85)
    v = a.vision
    assert (v.diff_threshold, v.cursor_min_area, v.cursor_max_area, v.keyframe_tau) == (25, 8, 900, 0.12)
    assert (v.min_shift, v.min_correlation, v.static_radius, v.directionality) == (4, 0.9, 8.0, 0.7)


def test_live_mode_needs_an_endpoint():
    with pytest.raises(ConfigError, match="mock script or an endpoint"):
        RunConfig()
    assert not RunConfig(endpoint="http://localhost:1/v1").mock


@pytest.mark.parametrize("kw", [
    {"mode": "batch"}, {"fps": 0}, {"window_s": -1}, {"jobs": 0}, {"rate_limit_rpm": 0}, {"timeout_s": 0},
    {"fps": 0.01, "window_s": 20},
])
def test_run_level_ranges(kw):
    with pytest.raises(ConfigError):
        RunConfig(mock_script="s.tsv", **kw)


@pytest.mark.parametrize("kw", [
    {"max_images": 0}, {"max_steps": 0}, {"max_steps": 65}, {"reflection_penalty": 1.5},
    {"review_threshold": -0.1}, {"override_confidence": 2}, {"n_exemplars": 0}, {"icvp_stride": 0},
])
def test_agent_ranges(kw):
    with pytest.raises(ConfigError):
        AgentConfig(**kw)


def test_file_sections_and_flag_overrides(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("mode: react\nmock_script: a.tsv\njobs: 2\nagent:\n  max_steps: 5\n  model_id: m1\n"
                    "vision:\n  keyframe_tau: 0.2\n")
    cfg = build_config(load_config_file(path), {"jobs": 6, "max_steps": 3, "fps": None})
    assert cfg.mode == "react" and cfg.jobs == 6 and cfg.fps == 1.0
    assert cfg.agent.max_steps == 3 and cfg.agent.model_id == "m1"
    assert cfg.agent.vision.keyframe_tau == 0.2


def test_json_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"endpoint": "http://x/v1", "agent": {"max_images": 10}}))
    cfg = build_config(load_config_file(path))
    assert cfg.endpoint == "http://x/v1" and cfg.agent.max_images == 10


@pytest.mark.parametrize("data, message", [
    ({"mock_script": "a", "colour": "red"}, "unknown run keys"),
    ({"mock_script": "a", "agent": {"lambda": 0.3}}, "unknown agent keys"),
    ({"mock_script": "a", "vision": {"keyframe_tau": 3}}, "invalid vision"),
])
def test_bad_config_is_a_config_error(data, message):
    with pytest.raises(ConfigError, match=message):
        build_config(data)


def test_unreadable_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config_file(bad)
    assert load_config_file(_empty(tmp_path)) == {}


def _empty(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    return p


def test_config_serialises_and_updates():
    cfg = RunConfig(mock_script="s.tsv")
    data = cfg.to_dict()
    assert data["agent"]["vision"]["diff_threshold"] == 25
    assert json.loads(json.dumps(data)) == data
    assert with_agent(cfg, max_steps=4).agent.max_steps == 4
