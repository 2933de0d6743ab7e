from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenecensor.errors import SegmentError
from scenecensor.media import (
    AudioTrack, Label, Segment, Verdict, VideoAsset, merge_segments, sample_frames, split_segments,
)

from conftest import make_asset


def test_split_twelve_seconds():
    segs = split_segments(make_asset(12.0), 5.0)
    assert [(float(s.start), float(s.end)) for s in segs] == [(0, 5), (5, 10), (10, 12)]
    assert [s.index for s in segs] == [0, 1, 2]


def test_split_exact_fit():
    segs = split_segments(make_asset(5.0), 5.0)
    assert len(segs) == 1
    assert (segs[0].start, segs[0].duration) == (0, 5)


def test_split_counts_forced_by_rates():
    segs = split_segments(make_asset(4.2, fps=10, sample_rate=8000), 5.0)
    assert len(segs) == 1
    assert segs[0].frame_count == 42
    assert len(segs[0].audio) == 33600


def test_split_rejects_empty_asset():
    empty = VideoAsset(10, np.zeros((0, 2, 2, 3), np.uint8), AudioTrack(8000, np.zeros(0, np.int16)))
    with pytest.raises(SegmentError, match="empty input"):
        split_segments(empty)


def test_split_rejects_bad_length():
    with pytest.raises(SegmentError):
        split_segments(make_asset(1.0), 0)


def test_merge_roundtrip_bit_exact():
    asset = make_asset(12.3, fps=10, sample_rate=8000)
    merged = merge_segments(split_segments(asset, 5.0), name=asset.name)
    assert merged == asset


def test_merge_additive_frame_counts():
    asset = make_asset(12.0, fps=10)
    segs = split_segments(asset, 5.0)
    assert [s.frame_count for s in segs] == [50, 50, 20]
    assert merge_segments(segs).frame_count == 120


def test_merge_detects_gap():
    segs = split_segments(make_asset(15.0), 5.0)
    moved = Segment(2, Fraction(11), segs[2].duration, segs[2].frames, segs[2].audio, segs[2].frame_rate)
    with pytest.raises(SegmentError, match="non-contiguous segments"):
        merge_segments([segs[0], segs[1], moved])


def test_merge_detects_incompatible():
    a = split_segments(make_asset(10.0, size=(4, 4)), 5.0)
    b = split_segments(make_asset(10.0, size=(2, 2)), 5.0)
    with pytest.raises(SegmentError, match="incompatible segments"):
        merge_segments([a[0], b[1]])


def test_sample_frames_cap():
    asset = make_asset(400, fps=1, sample_rate=100, size=(1, 1))
    assert len(sample_frames(asset, 1, 360)) == 360


def test_sample_frames_in_segment_uses_segment_clock():
    asset = make_asset(10.0, fps=10)
    seg = split_segments(asset, 5.0)[1]
    frames = sample_frames(seg, 1, 360)
    assert len(frames) == 5
    np.testing.assert_array_equal(frames, asset.frames[[50, 60, 70, 80, 90]])


def test_sample_frames_short_segment():
    seg = split_segments(make_asset(0.5), 5.0)[0]
    frames = sample_frames(seg, 1)
    assert len(frames) == 1
    np.testing.assert_array_equal(frames[0], seg.frames[0])


def test_sample_frames_takes_frame_at_or_before():
    # 3 fps: t=1 s falls exactly on frame 3, t=2 s on frame 6
    asset = make_asset(3.0, fps=3)
    np.testing.assert_array_equal(sample_frames(asset, 1), asset.frames[[0, 3, 6]])
    # 2.5 fps, rate 2: t = 0, .5, 1.0, 1.5 -> frames 0, 1 (1.25), 2 (2.5), 3 (3.75)
    asset = make_asset(2.0, fps=Fraction(5, 2), sample_rate=100)
    np.testing.assert_array_equal(sample_frames(asset, 2), asset.frames[[0, 1, 2, 3]])


def test_av_duration_mismatch_rejected():
    with pytest.raises(SegmentError):
        VideoAsset(10, np.zeros((10, 2, 2, 3), np.uint8), AudioTrack(100, np.zeros(300, np.int16)))


def test_assets_are_read_only():
    asset = make_asset(1.0)
    with pytest.raises(ValueError):
        asset.frames[0, 0, 0, 0] = 1
    with pytest.raises(ValueError):
        asset.audio.samples[0] = 1


def test_label_parse_and_flags():
    assert Label.parse("Inappropriate") is Label.INAPPROPRIATE
    assert Label.parse(" appr ") is Label.APPROPRIATE
    assert Label.parse("-1") is Label.APPROPRIATE
    with pytest.raises(ValueError):
        Label.parse("maybe")
    seg = split_segments(make_asset(1.0))[0]
    assert not seg.flagged
    assert seg.with_verdict(Verdict(Label.INAPPROPRIATE, 0.3)).flagged
    assert not seg.with_verdict(Verdict(Label.APPROPRIATE, -0.3)).flagged


@settings(max_examples=60, deadline=None)
@given(
    frames=st.integers(1, 80),
    fps=st.sampled_from([Fraction(1), Fraction(10), Fraction(30000, 1001), Fraction(5, 2), Fraction(25)]),
    sample_rate=st.sampled_from([100, 441, 8000]),
    max_len=st.sampled_from([0.3, 1, 2.5, 5.0, Fraction(7, 3), 100]),
)
def test_split_tiles_and_partitions(frames, fps, sample_rate, max_len):
    n_samples = int(Fraction(frames) / fps * sample_rate)
    rng = np.random.default_rng(frames)
    asset = VideoAsset(
        fps,
        rng.integers(0, 256, (frames, 2, 3, 3), dtype=np.uint8),
        AudioTrack(sample_rate, rng.integers(-32768, 32768, n_samples, dtype=np.int16)),
    )
    segs = split_segments(asset, max_len)
    limit = Fraction(max_len) if not isinstance(max_len, float) else Fraction(repr(max_len))
    assert segs[0].start == 0
    for a, b in zip(segs, segs[1:]):
        assert b.start == a.end
        assert a.duration == limit
    assert segs[-1].end == asset.duration
    assert all(0 < s.duration <= limit for s in segs)
    assert sum(s.frame_count for s in segs) == frames
    assert sum(len(s.audio) for s in segs) == n_samples
    assert merge_segments(segs) == asset
    for s in segs:
        assert abs(Fraction(s.frame_count) / fps - s.duration) <= 1 / fps


@settings(max_examples=80, deadline=None)
@given(
    frames=st.integers(0, 50),
    fps=st.sampled_from([Fraction(1), Fraction(3), Fraction(30000, 1001), Fraction(1, 2)]),
    rate=st.sampled_from([Fraction(1), Fraction(2), Fraction(1, 3), Fraction(7, 4)]),
    cap=st.sampled_from([Fraction(1), Fraction(5), Fraction(360), Fraction(3, 2)]),
)
def test_sampling_count_law(frames, fps, rate, cap):
    import math

    sr = 1000
    n_samples = round(Fraction(frames) / fps * sr)
    asset = VideoAsset(fps, np.zeros((frames, 1, 1, 3), np.uint8), AudioTrack(sr, np.zeros(n_samples, np.int16)))
    expected = min(math.ceil(min(asset.duration, cap) * rate), frames)
    assert len(sample_frames(asset, rate, cap)) == expected
