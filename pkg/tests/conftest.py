import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from icapcoder.core import ACTIONS, SCENES, LabelRecord  # noqa: E402


def random_record(rng: random.Random, uid: str) -> LabelRecord:
    scenes = frozenset(s for s in SCENES if rng.random() < 0.4)
    actions = frozenset(a for a in ACTIONS if rng.random() < 0.25)
    return LabelRecord(uid, scenes, actions)


def random_corpus(seed: int, max_units: int = 6):
    rng = random.Random(seed)
    n = rng.randint(1, max_units)
    gold = [random_record(rng, f"u{i}") for i in range(n)]
    pred = [random_record(rng, f"u{i}") for i in range(n) if rng.random() > 0.1]
    rng.shuffle(pred)
    return gold, pred


@pytest.fixture
def rec():
    def make(uid, scenes=(), actions=(), **kw):
        return LabelRecord(uid, frozenset(scenes), frozenset(actions), **kw)
    return make


def synthetic_video(spans, video_id="v", seed=0, **spec_kw):
    """Render a video from ``(scene, seconds, action)`` spans with its cooperative mock and gold."""
    from icapcoder.ingest import segment_fixed
    from icapcoder.synth import CorpusSpec, Span, VideoSpec, gold_records, mock_script_for, render_video
    from icapcoder.vlm import MockVLM

    video = VideoSpec(video_id, tuple(Span(*s) for s in spans))
    spec = CorpusSpec(seed=seed, n_videos=1, video_length_s=video.length_s, videos=(video,), **spec_kw)
    seq = render_video(video, spec.layout, seed).sequence()
    script = mock_script_for([video], spec)
    return {"video": video, "seq": seq, "units": segment_fixed(seq, spec.window_s),
            "script": script, "vlm": MockVLM(script), "gold": gold_records(video, spec.window_s)}
