import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import synthetic_video
from icapcoder.core import ACTIONS, Action, Scene, check_compatibility, compatible_scenes
from icapcoder.ingest import segment_fixed
from icapcoder.synth import (
    BEHAVIOURS,
    CorpusSpec,
    Layout,
    Span,
    SpecError,
    VideoSpec,
    corpus_digest,
    generate_corpus,
    gold_records,
    load_corpus_spec,
    random_timeline,
    render_span,
    resolve_videos,
    spec_to_dict,
    validate_timeline,
)
from icapcoder.vlm import fixture_tag, parse_structured_label


def small_spec(seed=0, **kw):
    return CorpusSpec(seed=seed, n_videos=2, video_length_s=40, **kw)


def test_two_span_gold_restates_the_timeline():
    video = VideoSpec("v", (Span(Scene.WEB, 20, Action.SEARCHING_INTERNET),
                            Span(Scene.DOCS, 20, Action.GROUP_DOCUMENT_CO_EDITING)))
    gold = gold_records(video)
    assert [(r.unit_id, r.scenes, r.actions) for r in gold] == [
        ("v_u00", {Scene.WEB}, {Action.SEARCHING_INTERNET}),
        ("v_u01", {Scene.DOCS}, {Action.GROUP_DOCUMENT_CO_EDITING}),
    ]


def test_span_crossing_a_unit_boundary_labels_both_units():
    video = VideoSpec("v", (Span(Scene.WEB, 30, Action.READING_WITH_SCROLLING),
                            Span(Scene.GAI, 10, Action.PROMPTING_GAI)))
    gold = gold_records(video)
    assert gold[0].scenes == {Scene.WEB}
    assert gold[1].scenes == {Scene.WEB, Scene.GAI}
    assert gold[1].actions == {Action.READING_WITH_SCROLLING, Action.PROMPTING_GAI}


def test_freezing_span_frames_are_byte_identical():
    r = render_span(np.random.default_rng(1), Scene.GAI, Action.FREEZING, 12, Layout(320, 256))
    assert all(np.array_equal(r.frames[0], f) for f in r.frames[1:])
    assert len(set(r.cursor_truth)) == 1


@pytest.mark.parametrize("action", ACTIONS)
def test_every_behaviour_renders_the_requested_length(action):
    scene = sorted(compatible_scenes(action), key=lambda s: s.value)[0]
    r = render_span(np.random.default_rng(3), scene, action, 9, Layout(320, 256))
    assert len(r.frames) == 9 and len(r.cursor_truth) == 9
    assert all(f.shape == (256, 320, 3) and f.dtype == np.uint8 for f in r.frames)
    assert set(BEHAVIOURS) == set(ACTIONS)


def test_same_seed_gives_byte_identical_corpora(tmp_path):
    generate_corpus(small_spec(5), tmp_path / "a", jobs=2)
    generate_corpus(small_spec(5), tmp_path / "b", jobs=1)
    assert corpus_digest(tmp_path / "a") == corpus_digest(tmp_path / "b")


def test_different_seeds_differ(tmp_path):
    generate_corpus(small_spec(1), tmp_path / "a")
    generate_corpus(small_spec(2), tmp_path / "b")
    assert corpus_digest(tmp_path / "a") != corpus_digest(tmp_path / "b")


def test_corpus_layout(tmp_path):
    corpus = generate_corpus(small_spec(0), tmp_path)
    assert sorted(p.name for p in (tmp_path / "videos").iterdir()) == ["v00", "v01"]
    assert len(list((tmp_path / "videos" / "v00").glob("frame_*.png"))) == 40
    for name in ("gold.tsv", "mock_script.tsv", "ground_truth.json", "corpus_spec.json"):
        assert (tmp_path / name).is_file()
    assert len(corpus.gold) == 4
    truth = json.loads((tmp_path / "ground_truth.json").read_text())
    assert set(truth) == {"v00", "v01"}
    assert truth["v00"]["keyframes"][0] == 0


def test_no_mock_script_without_tagging(tmp_path):
    generate_corpus(small_spec(0, fixture_tagging=False), tmp_path)
    assert not (tmp_path / "mock_script.tsv").exists()


def test_spec_round_trips_through_its_file(tmp_path):
    spec = small_spec(9)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec_to_dict(spec)))
    again = load_corpus_spec(path)
    assert resolve_videos(again) == resolve_videos(spec)


def test_yaml_spec_with_explicit_timeline(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text(
        "seed: 4\nn_videos: 1\nvideo_length_s: 40\nvideos:\n"
        "  - id: demo\n    timeline:\n"
        "      - {scene: web, duration_s: 20, action: searching_internet}\n"
        "      - {scene: docs, duration_s: 20, action: group_document_co_editing}\n")
    spec = load_corpus_spec(path)
    (video,) = resolve_videos(spec)
    assert video.video_id == "demo" and video.length_s == 40


def test_seed_override_from_the_command_line(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"seed": 1, "n_videos": 1, "video_length_s": 20}))
    assert load_corpus_spec(path, seed=7).seed == 7


@pytest.mark.parametrize("timeline, message", [
    ((Span(Scene.WEB, 20, Action.PROMPTING_GAI),), "incompatible"),
    ((Span(Scene.WEB, 0, Action.SEARCHING_INTERNET),), "duration"),
    ((Span(Scene.WEB, 10, Action.SEARCHING_INTERNET), Span(Scene.WEB, 10, Action.COPY_AND_PASTE)), "scene"),
])
def test_invalid_timelines_are_refused(timeline, message):
    with pytest.raises(SpecError, match=message):
        validate_timeline(VideoSpec("v", timeline))


def test_timeline_must_fill_the_video():
    video = VideoSpec("v", (Span(Scene.WEB, 20, Action.SEARCHING_INTERNET),))
    with pytest.raises(SpecError):
        CorpusSpec(n_videos=1, video_length_s=40, videos=(video,))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 120))
def test_random_timelines_are_valid_and_gold_is_compatible(seed, length):
    video = random_timeline(np.random.default_rng(seed), "v", length)
    validate_timeline(video, length)
    for rec in gold_records(video):
        assert check_compatibility(rec) == []


def test_mock_answers_each_unit_tag_with_its_gold():
    v = synthetic_video([(Scene.DOCS, 20, Action.TICKING_ANSWERS), (Scene.GAI, 20, Action.PROMPTING_GAI)])
    for rec in v["gold"]:
        label = parse_structured_label(v["script"].resolve(f"prompt {fixture_tag(rec.unit_id)}"))
        assert (label.scenes, label.actions) == (rec.scenes, rec.actions)


def test_gold_matches_segment_fixed_units():
    v = synthetic_video([(Scene.WEB, 25, Action.SEARCHING_INTERNET), (Scene.GAI, 25, Action.FREEZING)])
    assert [u.unit_id for u in segment_fixed(v["seq"])] == [r.unit_id for r in v["gold"]]
