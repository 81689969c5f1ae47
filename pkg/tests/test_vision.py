import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icapcoder.ingest import Frame, FrameSequence
from icapcoder.vision import (
    AttentionBox,
    CursorTrajectory,
    MotionPattern,
    classify_motion_pattern,
    detect_cursor,
    detect_keyframes,
    detect_vertical_shift,
    frame_diff_score,
    overlay_highlight,
    pair_evidence,
)


def solid(value, w=8, h=6):
    return Frame(0, 0.0, np.full((h, w, 3), value, dtype=np.uint8))


def textured(seed, w=64, h=200):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 256, size=h)
    img = np.repeat(rows[:, None], w, axis=1)
    return np.repeat(img[:, :, None], 3, axis=2).astype(np.uint8)


def shifted_up(img, d, fill=128):
    out = np.full_like(img, fill)
    if d >= 0:
        out[:img.shape[0] - d] = img[d:]
    else:
        out[-d:] = img[:img.shape[0] + d]
    return out


def brute_force_offset(a, b, max_shift):
    """Exhaustive offset scan: mean squared profile error over the overlap."""
    pa = (a.astype(np.int64).sum(axis=2) // 3).mean(axis=1)
    pb = (b.astype(np.int64).sum(axis=2) // 3).mean(axis=1)
    n = len(pa)
    best = None
    for d in range(-max_shift, max_shift + 1):
        x = pa[d:] if d >= 0 else pa[:n + d]
        y = pb[:n - d] if d >= 0 else pb[-d:]
        err = float(((x - y) ** 2).mean())
        if best is None or err < best[0] - 1e-12:
            best = (err, d)
    return best[1]


class TestFrameDiff:
    def test_identical(self):
        assert frame_diff_score(solid(90), solid(90)) == 0.0

    def test_black_white(self):
        assert frame_diff_score(solid(0), solid(255)) == 1.0

    def test_hand_arithmetic(self):
        a = np.zeros((1, 2, 3), dtype=np.uint8)
        b = a.copy()
        b[0, 0] = 51
        assert frame_diff_score(Frame(0, 0, a), Frame(1, 1, b)) == pytest.approx(0.1, abs=1e-15)

    def test_gray_rounds_down(self):
        a = np.zeros((1, 1, 3), dtype=np.uint8)
        b = np.array([[[1, 1, 0]]], dtype=np.uint8)  # mean 2/3 -> gray 0
        assert frame_diff_score(Frame(0, 0, a), Frame(1, 1, b)) == 0.0

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            frame_diff_score(solid(0, 4, 4), solid(0, 5, 4))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a = Frame(0, 0, rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
        b = Frame(1, 1, rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
        assert frame_diff_score(a, b) == frame_diff_score(b, a)


class TestVerticalShift:
    def test_shift_up_10(self):
        img = textured(1)
        res = detect_vertical_shift(Frame(0, 0, img), Frame(1, 1, shifted_up(img, 10)), max_shift=60)
        assert res.offset_px == 10 == brute_force_offset(img, shifted_up(img, 10), 60)
        assert res.detected

    def test_no_shift(self):
        img = textured(2)
        res = detect_vertical_shift(Frame(0, 0, img), Frame(1, 1, img), max_shift=60)
        assert res.offset_px == 0 and not res.detected
        assert res.correlation == pytest.approx(1.0)

    def test_noise_not_detected(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 256, (200, 64, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (200, 64, 3), dtype=np.uint8)
        res = detect_vertical_shift(Frame(0, 0, a), Frame(1, 1, b), max_shift=60)
        assert not res.detected
        assert res.correlation < 0.9

    def test_constant_frames_not_detected(self):
        res = detect_vertical_shift(solid(30, 10, 40), solid(30, 10, 40), max_shift=10)
        assert not res.detected and res.offset_px == 0

    def test_max_shift_precondition(self):
        with pytest.raises(ValueError):
            detect_vertical_shift(solid(0, 4, 20), solid(0, 4, 20), max_shift=10)

    @given(st.integers(0, 10_000), st.integers(4, 60), st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_recovers_synthetic_offsets(self, seed, mag, up):
        d = mag if up else -mag
        img = textured(seed)
        moved = shifted_up(img, d)
        res = detect_vertical_shift(Frame(0, 0, img), Frame(1, 1, moved), max_shift=60)
        assert abs(res.offset_px - d) <= 1
        assert res.detected
        assert res.offset_px == brute_force_offset(img, moved, 60)


def blob_frames(positions, w=120, h=120, bw=12, bh=18, scroll=None):
    """White frames with a black bw x bh blob at each top-left position.

    With ``scroll`` the background is a row texture moving up by that many
    pixels per frame, the blob staying put in screen coordinates.
    """
    frames, centroids = [], []
    doc = textured(99, w, h * 4) // 2 + 100 if scroll else None
    for k, (x, y) in enumerate(positions):
        if scroll:
            img = doc[k * scroll:k * scroll + h].copy()
        else:
            img = np.full((h, w, 3), 255, dtype=np.uint8)
        img[y:y + bh, x:x + bw] = 0
        frames.append(img)
        centroids.append((x + (bw - 1) / 2, y + (bh - 1) / 2))
    return FrameSequence.from_arrays(frames), centroids


class TestCursor:
    def test_blob_diagonal(self):
        pos = [(10 + 20 * k, 10 + 20 * k) for k in range(5)]
        seq, truth = blob_frames(pos)
        traj = detect_cursor(seq)
        assert [p[0] for p in traj.points] == [1, 2, 3, 4]
        for (_, x, y), (tx, ty) in zip(traj.points, truth[1:]):
            assert abs(x - tx) <= 1 and abs(y - ty) <= 1
        assert traj.activity_ratio == 1.0

    def test_identical_frames(self):
        seq = FrameSequence.from_arrays([np.full((40, 40, 3), 200, np.uint8)] * 5)
        traj = detect_cursor(seq)
        assert traj.points == () and traj.pattern is MotionPattern.NONE
        assert traj.activity_ratio == 0.0

    def test_blob_over_scrolling_background(self):
        pos = [(20 + 15 * k, 30 + 10 * k) for k in range(5)]
        seq, truth = blob_frames(pos, w=160, h=160, scroll=10)
        traj = detect_cursor(seq)
        assert len(traj.points) == 4
        errors = [np.hypot(x - tx, y - ty) for (_, x, y), (tx, ty) in zip(traj.points, truth[1:])]
        assert max(errors) <= 3

    def test_static_blob_over_scroll_is_static(self):
        seq, truth = blob_frames([(50, 60)] * 6, w=160, h=160, scroll=8)
        traj = detect_cursor(seq)
        assert len(traj.points) == 5
        assert traj.pattern is MotionPattern.STATIC

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            detect_cursor(FrameSequence.from_arrays([np.zeros((4, 4, 3), np.uint8)]))


class TestMotionPattern:
    def test_static(self):
        assert classify_motion_pattern([(i, 50, 50) for i in range(4)]) is MotionPattern.STATIC

    def test_horizontal(self):
        pts = [(0, 10, 100), (1, 60, 101), (2, 110, 99), (3, 160, 100)]
        assert classify_motion_pattern(pts) is MotionPattern.LINEAR_HORIZONTAL

    def test_vertical(self):
        pts = [(0, 100, 10), (1, 101, 60), (2, 99, 110)]
        assert classify_motion_pattern(pts) is MotionPattern.LINEAR_VERTICAL

    def test_jump(self):
        pts = [(0, 10, 10), (1, 300, 250), (2, 20, 400)]
        assert classify_motion_pattern(pts) is MotionPattern.JUMP

    def test_too_few_points(self):
        assert classify_motion_pattern([(0, 1, 1)]) is MotionPattern.NONE
        assert classify_motion_pattern(CursorTrajectory((), MotionPattern.NONE, 0.0)) is MotionPattern.NONE

    def test_backtracking_horizontal_is_jump(self):
        pts = [(0, 10, 100), (1, 100, 100), (2, 40, 100), (3, 150, 100)]
        assert classify_motion_pattern(pts) is MotionPattern.JUMP


class TestKeyframes:
    def test_identical(self):
        seq = FrameSequence.from_arrays([np.full((4, 4, 3), 9, np.uint8)] * 10)
        assert detect_keyframes(seq) == [0]

    def test_white_black(self):
        w, b = np.full((4, 4, 3), 255, np.uint8), np.zeros((4, 4, 3), np.uint8)
        seq = FrameSequence.from_arrays([w, w, b, b, w])
        assert detect_keyframes(seq, tau=0.12) == [0, 2, 4]

    def test_unreachable_threshold(self):
        w, b = np.full((4, 4, 3), 255, np.uint8), np.zeros((4, 4, 3), np.uint8)
        assert detect_keyframes(FrameSequence.from_arrays([w, b, w]), tau=1.0) == [0]

    @given(st.lists(st.integers(0, 255), min_size=1, max_size=12), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_strictly_increasing_from_zero(self, levels, tau):
        seq = FrameSequence.from_arrays([np.full((3, 3, 3), v, np.uint8) for v in levels])
        keys = detect_keyframes(seq, tau)
        assert keys[0] == 0
        assert all(b > a for a, b in zip(keys, keys[1:]))


def outline_set(box, t=3):
    cells = set()
    for y in range(box.y, box.y + box.h):
        for x in range(box.x, box.x + box.w):
            if (y < box.y + t or y >= box.y + box.h - t or x < box.x + t or x >= box.x + box.w - t):
                cells.add((y, x))
    return cells


class TestOverlay:
    def test_exact_outline(self):
        rng = np.random.default_rng(0)
        px = rng.integers(0, 200, (100, 100, 3), dtype=np.uint8)
        frame = Frame(0, 0, px)
        box = AttentionBox(10, 10, 20, 20)
        out = overlay_highlight(frame, box)
        changed = {tuple(c) for c in np.argwhere((out.pixels != px).any(axis=2))}
        assert changed == outline_set(box)
        assert np.array_equal(frame.pixels, px)

    def test_interior_untouched(self):
        px = np.full((50, 60, 3), 77, dtype=np.uint8)
        out = overlay_highlight(Frame(0, 0, px), AttentionBox(2, 2, 56, 46))
        assert np.array_equal(out.pixels[5:45, 5:55], px[5:45, 5:55])

    def test_zero_box(self):
        with pytest.raises(ValueError):
            AttentionBox(0, 0, 0, 0)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            overlay_highlight(solid(0, 10, 10), AttentionBox(5, 5, 10, 2))


class TestPairEvidence:
    def test_small_rectangle_is_localized(self):
        a = np.full((100, 100, 3), 240, np.uint8)
        b = a.copy()
        b[10:22, 10:60] = 100
        ev = pair_evidence(Frame(0, 0, a), Frame(1, 1, b))
        assert ev.localized and ev.diff_score >= 0.005

    def test_identical_not_localized(self):
        a = np.full((100, 100, 3), 240, np.uint8)
        ev = pair_evidence(Frame(0, 0, a), Frame(1, 1, a))
        assert not ev.localized and ev.diff_score == 0.0

    def test_scroll_not_localized(self):
        img = textured(5, 64, 200)
        ev = pair_evidence(Frame(0, 0, img), Frame(1, 1, shifted_up(img, 12)))
        assert ev.shift.detected and not ev.localized
