import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazeid.schemas.gaze import BlinkParams, GazeRecording, InvalidRun, IvtParams, Segment
from gazeid.services.preprocess_service import PreprocessService
from gazeid.services.segmentation_service import SegmentationError, SegmentationService

RATE = 250.0


# ------------------------- Fakes & helpers ------------------------------------
def make_recording(x, y, rate=RATE, valid=None):
    x = np.asarray(x, dtype=float)
    return GazeRecording(
        t=np.arange(x.size) / rate, x=x, y=y,
        valid=np.ones(x.size, dtype=bool) if valid is None else valid,
        sample_rate_hz=rate, participant_id="p1", session_label="s1",
    )


def random_walk(seed: int, n: int, saccade_prob: float) -> GazeRecording:
    """Small steps (fixation-like) mixed with large jumps."""
    rng = np.random.default_rng(seed)
    big = rng.random(n - 1) < saccade_prob
    step = np.where(big, rng.uniform(0.3, 2.0, n - 1), rng.uniform(0.0, 0.02, n - 1))
    angle = rng.uniform(-np.pi, np.pi, n - 1)
    x = np.concatenate([[0.0], np.cumsum(step * np.cos(angle))])
    y = np.concatenate([[0.0], np.cumsum(step * np.sin(angle))])
    return make_recording(x, y)


def reference_ivt(rec: GazeRecording, vt: float, mfd: float):
    """Loop version of the velocity-threshold segmenter: (kind, start, end) triples."""
    n = rec.n_samples
    labels = []
    for i in range(n - 1):
        v = np.hypot(rec.x[i + 1] - rec.x[i], rec.y[i + 1] - rec.y[i]) * rec.sample_rate_hz
        labels.append(bool(v < vt))
    labels.append(labels[-1])

    runs, start = [], 0
    for i in range(1, n + 1):
        if i == n or labels[i] != labels[start]:
            runs.append([labels[start], start, i - 1])
            start = i

    min_points = mfd * rec.sample_rate_hz - 1e-9
    if len(runs) == 1 and runs[0][0] and n < min_points:
        return []
    for r in runs:
        if r[0] and r[2] - r[1] + 1 < min_points:
            r[0] = False

    merged = []
    for r in runs:
        if merged and merged[-1][0] == r[0]:
            merged[-1][2] = r[2]
        else:
            merged.append(list(r))
    return [("fixation" if f else "saccade", s, e) for f, s, e in merged]


def seg(kind: str, start: int, n: int) -> Segment:
    return Segment(kind=kind, start_index=start, end_index=start + n - 1,
                   points=np.zeros((n, 2)), duration=n / RATE)


def assert_tiles(segments, n):
    assert segments[0].start_index == 0
    assert segments[-1].end_index == n - 1
    for a, b in zip(segments, segments[1:]):
        assert b.start_index == a.end_index + 1
        assert a.kind != b.kind


walks = st.builds(
    random_walk,
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    n=st.integers(min_value=2, max_value=300),
    saccade_prob=st.sampled_from([0.0, 0.05, 0.2, 0.6, 1.0]),
)


# ------------------------------- IVT ------------------------------------------
def test_velocity_is_distance_times_rate():
    rec = make_recording([0.0, 0.3, 0.3, 0.7], [0.0, 0.4, 0.4, 0.7])
    v = SegmentationService.pointwise_angular_velocity(rec)
    np.testing.assert_allclose(v, [0.5 * RATE, 0.0, 0.5 * RATE])


def test_last_sample_copies_previous_label():
    x = np.zeros(60)
    x[-1] = 5.0
    labels = SegmentationService.ivt_labels(make_recording(x, np.zeros(60)), IvtParams(min_fixation_duration_s=0))
    assert labels[:-2].all()
    assert not labels[-2] and not labels[-1]


@settings(max_examples=200, deadline=None)
@given(walks, st.sampled_from([20.0, 50.0, 80.0]), st.sampled_from([0.0, 0.02, 0.1]))
def test_ivt_matches_reference_loop(rec, vt, mfd):
    got = SegmentationService.ivt_segment(rec, IvtParams(velocity_threshold_deg_s=vt, min_fixation_duration_s=mfd))
    assert [(s.kind, s.start_index, s.end_index) for s in got] == reference_ivt(rec, vt, mfd)


@settings(max_examples=100, deadline=None)
@given(walks, st.sampled_from([0.0, 0.05, 0.1]))
def test_ivt_segments_tile_and_alternate(rec, mfd):
    segments = SegmentationService.ivt_segment(rec, IvtParams(min_fixation_duration_s=mfd))
    if segments:
        assert_tiles(segments, rec.n_samples)
        for s in segments:
            assert s.duration == pytest.approx(s.point_count / RATE)
            assert s.kind == "saccade" or s.point_count >= mfd * RATE - 1e-9


def test_zero_mfd_is_plain_threshold():
    x = np.concatenate([np.zeros(5), np.arange(1, 4) * 1.0, np.full(4, 3.0)])
    segments = SegmentationService.ivt_segment(make_recording(x, np.zeros_like(x)), IvtParams(min_fixation_duration_s=0))
    assert [(s.kind, s.start_index, s.end_index) for s in segments] == [
        ("fixation", 0, 3), ("saccade", 4, 6), ("fixation", 7, 11),
    ]


def test_short_fixation_joins_neighbouring_saccades():
    # 30 campioni fermi, 3 saltuari, 10 fermi (40 ms < 100 ms), 3 saltuari, 40 fermi
    x = np.concatenate([
        np.zeros(30), [1.0, 2.0, 3.0], np.full(10, 3.0), [4.0, 5.0, 6.0], np.full(40, 6.0),
    ])
    segments = SegmentationService.ivt_segment(make_recording(x, np.zeros_like(x)), IvtParams())
    assert [s.kind for s in segments] == ["fixation", "saccade", "fixation"]
    assert segments[1].start_index == 29 and segments[1].end_index == 44


def test_single_short_fixation_yields_nothing():
    rec = make_recording(np.zeros(10), np.zeros(10))
    assert SegmentationService.ivt_segment(rec, IvtParams()) == []


# ------------------------------ Blinks ----------------------------------------
def test_blink_duration_gate_is_inclusive():
    rate = 1000.0
    valid = np.ones(3000, dtype=bool)
    start = 100
    for ms in (50, 80, 300, 500, 600):
        valid[start:start + ms] = False
        start += ms + 200
    x = np.where(valid, 0.0, np.nan)
    rec = make_recording(x, x.copy(), rate=rate, valid=valid)
    runs = PreprocessService.detect_invalid_runs(rec)
    assert [r.length for r in runs] == [50, 80, 300, 500, 600]

    blinks = SegmentationService.extract_blinks(runs, BlinkParams())
    assert [round(b.duration * 1000) for b in blinks] == [80, 300, 500]
    assert all(b.kind == "blink" for b in blinks)


def test_blink_gate_uses_given_bounds():
    runs = [InvalidRun(start_index=0, end_index=9, duration=0.04)]
    assert SegmentationService.extract_blinks(runs, BlinkParams()) == []
    assert len(SegmentationService.extract_blinks(runs, BlinkParams(min_duration_s=0.03, max_duration_s=0.1))) == 1


# --------------------------- Point floor --------------------------------------
def test_short_saccade_merges_and_neighbours_join():
    out = SegmentationService.enforce_min_points(
        [seg("fixation", 0, 10), seg("saccade", 10, 2), seg("fixation", 12, 10)], 3
    )
    assert len(out) == 1
    assert (out[0].kind, out[0].start_index, out[0].end_index) == ("fixation", 0, 21)
    assert out[0].points.shape == (22, 2)


def test_short_last_segment_merges_backwards():
    out = SegmentationService.enforce_min_points(
        [seg("fixation", 0, 10), seg("saccade", 10, 10), seg("fixation", 20, 2)], 3
    )
    assert [(s.kind, s.start_index, s.end_index) for s in out] == [("fixation", 0, 9), ("saccade", 10, 21)]


def test_saccades_have_a_floor_of_three_points():
    out = SegmentationService.enforce_min_points(
        [seg("fixation", 0, 5), seg("saccade", 5, 2), seg("fixation", 7, 5)], 1
    )
    assert [s.kind for s in out] == ["fixation"]


def test_nothing_above_floor_raises():
    with pytest.raises(SegmentationError):
        SegmentationService.enforce_min_points([seg("fixation", 0, 2)], 4)
    with pytest.raises(SegmentationError):
        SegmentationService.enforce_min_points([], 1)


@settings(max_examples=150, deadline=None)
@given(walks, st.integers(min_value=1, max_value=6))
def test_point_floor_holds_after_merging(rec, min_points):
    segments = SegmentationService.ivt_segment(rec, IvtParams(min_fixation_duration_s=0))
    try:
        out = SegmentationService.enforce_min_points(segments, min_points)
    except SegmentationError:
        return
    assert_tiles(out, rec.n_samples)
    for s in out:
        floor = max(min_points, 3) if s.kind == "saccade" else min_points
        assert s.point_count >= floor
