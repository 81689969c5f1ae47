import json

import pytest

from icapcoder import __version__
from icapcoder.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_command
from icapcoder.config import ConfigError, RunConfig
from icapcoder.core import read_labels, write_labels
from icapcoder.pipeline import build_client, discover_videos
from icapcoder.synth import corpus_digest
from icapcoder.vlm import HttpVLMClient


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_videos": 2, "video_length_s": 40}))
    assert run_command(["synth", "--spec", str(spec), "--out", str(root / "c"), "--seed", "11"]) == EXIT_OK
    return root / "c"


def run(corpus, out, *extra):
    return run_command(["run", "--mock", str(corpus / "mock_script.tsv"), "--in", str(corpus),
                        "--out", str(out), *extra])


@pytest.mark.parametrize("mode", ["workflow", "react", "single"])
def test_run_then_eval_is_perfect(corpus, tmp_path, mode, capsys):
    assert run(corpus, tmp_path / "r", "--mode", mode) == EXIT_OK
    pred = read_labels(tmp_path / "r" / "predictions.tsv")
    assert [p.unit_id for p in pred] == [g.unit_id for g in read_labels(corpus / "gold.tsv")]
    capsys.readouterr()
    code = run_command(["eval", "--gold", str(corpus / "gold.tsv"), "--pred", str(tmp_path / "r" / "predictions.tsv"),
                        "--report", str(tmp_path / "rep")])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert report["scene_macro_f1"] == 1.0 and report["scene_hamming"] == 0.0
    assert report["action_micro_f1"] == 1.0 and report["action_hamming"] == 0.0
    assert "F1 / HL" in capsys.readouterr().out


def test_manifest_records_config_version_and_unit_status(corpus, tmp_path):
    assert run(corpus, tmp_path, "--mode", "workflow", "--seed", "3") == EXIT_OK
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["version"] == __version__ and m["seed"] == 3 and m["mode"] == "workflow"
    assert m["config"]["agent"]["vision"]["keyframe_tau"] == 0.12
    assert [u["status"] for u in m["units"]] == ["ok"] * 4
    assert [i["video"] for i in m["inputs"]] == ["v00", "v01"]
    assert m["mock_script_sha256"] and m["prompts_sha256"]
    assert sorted(p.name for p in (tmp_path / "traces").iterdir()) == ["v00.json", "v01.json"]


def test_react_traces_are_per_unit(corpus, tmp_path):
    assert run(corpus, tmp_path, "--mode", "react", "--max-steps", "5") == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "traces" / "v00").iterdir())
    assert files == ["v00_u00.json", "v00_u01.json"]
    trace = json.loads((tmp_path / "traces" / "v00" / "v00_u00.json").read_text())
    assert trace["state"]["max_steps"] == 5 and trace["state"]["done"]


@pytest.mark.parametrize("mode", ["workflow", "react"])
def test_runs_are_byte_identical(corpus, tmp_path, mode):
    assert run(corpus, tmp_path / "a", "--mode", mode, "--jobs", "1") == EXIT_OK
    assert run(corpus, tmp_path / "b", "--mode", mode, "--jobs", "4") == EXIT_OK
    for rel in ("predictions.tsv", "traces"):
        assert corpus_digest_of(tmp_path / "a" / rel) == corpus_digest_of(tmp_path / "b" / rel)


def corpus_digest_of(path):
    return path.read_bytes() if path.is_file() else corpus_digest(path)


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run_command(["synth", "--out", str(tmp_path / name), "--seed", "2"]) == EXIT_OK
    assert corpus_digest(tmp_path / "a") == corpus_digest(tmp_path / "b")


def test_eval_on_identical_files(corpus, capsys):
    gold = str(corpus / "gold.tsv")
    assert run_command(["eval", "--gold", gold, "--pred", gold]) == EXIT_OK
    assert "1.000 / 0.000" in capsys.readouterr().out


def test_run_without_endpoint_or_mock_is_a_usage_error(corpus, tmp_path, capsys):
    assert run_command(["run", "--in", str(corpus), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["frobnicate"],
    [],
    ["run", "--mode", "batch", "--mock", "x", "--in", "x", "--out", "y"],
    ["eval", "--gold", "g.tsv"],
])
def test_bad_arguments_exit_one(argv, capsys):
    assert run_command(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_invalid_config_value_is_a_usage_error(corpus, tmp_path):
    assert run(corpus, tmp_path, "--max-steps", "0") == EXIT_USAGE


def test_missing_credentials_is_a_usage_error(corpus, tmp_path, monkeypatch):
    monkeypatch.delenv("ICAP_API_KEY", raising=False)
    code = run_command(["run", "--endpoint", "http://127.0.0.1:9/v1", "--in", str(corpus), "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_live_client_reads_the_credentials_variable(monkeypatch):
    monkeypatch.setenv("MY_KEY", "secret")
    client = build_client(RunConfig(endpoint="http://127.0.0.1:9/v1", credentials_env="MY_KEY"))
    assert isinstance(client, HttpVLMClient)
    monkeypatch.delenv("MY_KEY")
    with pytest.raises(ConfigError):
        build_client(RunConfig(endpoint="http://127.0.0.1:9/v1", credentials_env="MY_KEY"))


@pytest.mark.parametrize("argv", [
    ["eval", "--gold", "/nonexistent/g.tsv", "--pred", "/nonexistent/p.tsv"],
])
def test_missing_files_are_runtime_failures(argv):
    assert run_command(argv) == EXIT_RUNTIME


def test_missing_input_is_a_runtime_failure(corpus, tmp_path):
    assert run_command(["run", "--mock", str(corpus / "mock_script.tsv"), "--in", str(tmp_path / "none"),
                        "--out", str(tmp_path / "o")]) == EXIT_RUNTIME


def test_malformed_prediction_file_is_a_runtime_failure(corpus, tmp_path):
    bad = tmp_path / "p.tsv"
    bad.write_text("this is not a label file\n")
    assert run_command(["eval", "--gold", str(corpus / "gold.tsv"), "--pred", str(bad)]) == EXIT_RUNTIME


def test_provider_errors_are_recorded_per_unit(corpus, tmp_path):
    script = tmp_path / "s.tsv"
    script.write_text("tag\tresponse\n*\t!error offline\n")
    assert run_command(["run", "--mode", "single", "--mock", str(script), "--in", str(corpus),
                        "--out", str(tmp_path / "r")]) == EXIT_OK
    m = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert m["unit_errors"] == 4
    assert all(u["status"].startswith("error") for u in m["units"])
    assert all(r.flagged for r in read_labels(tmp_path / "r" / "predictions.tsv"))


def test_video_discovery(corpus, tmp_path):
    assert [p.name for p in discover_videos(corpus)] == ["v00", "v01"]
    assert [p.name for p in discover_videos(corpus / "videos" / "v01")] == ["v01"]
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError):
        discover_videos(tmp_path / "empty")


def test_single_frame_directory_run(corpus, tmp_path):
    assert run_command(["run", "--mock", str(corpus / "mock_script.tsv"), "--in", str(corpus / "videos" / "v01"),
                        "--out", str(tmp_path), "--mode", "single"]) == EXIT_OK
    assert [r.unit_id for r in read_labels(tmp_path / "predictions.tsv")] == ["v01_u00", "v01_u01"]


def test_eval_reports_missing_predictions(corpus, tmp_path, capsys):
    gold = read_labels(corpus / "gold.tsv")
    write_labels(tmp_path / "p.tsv", gold[:-1])
    assert run_command(["eval", "--gold", str(corpus / "gold.tsv"), "--pred", str(tmp_path / "p.tsv")]) == EXIT_OK
    assert "missing predictions" in capsys.readouterr().out
