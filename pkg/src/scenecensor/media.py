"""In-memory video/audio model and timeline operations (split, merge, sampling).

Frames are ``uint8`` arrays of shape ``(height, width, 3)`` holding RGB.  A
video asset stores all of its frames in a single ``(n, height, width, 3)``
array; segments hold views into it, so splitting is cheap.

Timeline coordinates are kept as :class:`fractions.Fraction` so that segment
boundaries tile the timeline exactly (``start[i + 1] == start[i] + duration[i]``
holds without rounding error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import SegmentError

Number = Union[int, float, Fraction]

DEFAULT_SEGMENT_SECONDS = 5.0


def as_fraction(value: Number) -> Fraction:
    """Exact rational for a time or rate; floats go through their decimal repr."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    return Fraction(value)


def _frozen(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


def check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype != np.uint8 or frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"frame must be uint8 (height, width, 3), got {frame.dtype} {frame.shape}")
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise ValueError("frame width and height must be positive")
    return frame


def stack_frames(frames: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
    """Return frames as one ``(n, h, w, 3)`` uint8 array, checking uniform size."""
    if isinstance(frames, np.ndarray) and frames.ndim == 4:
        array = frames
    else:
        frames = [check_frame(f) for f in frames]
        if not frames:
            return np.zeros((0, 1, 1, 3), dtype=np.uint8)
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise SegmentError("incompatible frames: frame dimensions differ")
        array = np.stack(frames)
    if array.dtype != np.uint8 or array.shape[-1] != 3:
        raise ValueError(f"frames must be uint8 (n, h, w, 3), got {array.dtype} {array.shape}")
    if array.shape[1] == 0 or array.shape[2] == 0:
        raise ValueError("frame width and height must be positive")
    return array


class Label(IntEnum):
    """Segment class; the integer value is the SVM target."""

    APPROPRIATE = -1
    INAPPROPRIATE = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = str(text).strip().lower()
        aliases = {
            "appropriate": cls.APPROPRIATE,
            "appr": cls.APPROPRIATE,
            "-1": cls.APPROPRIATE,
            "0": cls.APPROPRIATE,
            "inappropriate": cls.INAPPROPRIATE,
            "inap": cls.INAPPROPRIATE,
            "1": cls.INAPPROPRIATE,
            "+1": cls.INAPPROPRIATE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None

    @property
    def text(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Verdict:
    label: Label
    score: float


@dataclass(frozen=True, eq=False)
class AudioTrack:
    """Mono signed 16-bit PCM."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError("audio samples must be one-dimensional (mono)")
        if samples.dtype != np.int16:
            if samples.size and (samples.min() < -32768 or samples.max() > 32767):
                raise ValueError("audio samples out of 16-bit range")
            samples = samples.astype(np.int16)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "samples", _frozen(samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> Fraction:
        return Fraction(len(self.samples), self.sample_rate)

    @property
    def duration_seconds(self) -> float:
        return float(self.duration)

    def __eq__(self, other):
        if not isinstance(other, AudioTrack):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True, eq=False)
class VideoAsset:
    """A decoded video: uniform RGB frames at a constant rate plus a mono track."""

    frame_rate: Fraction
    frames: np.ndarray
    audio: AudioTrack
    name: str = "video"

    def __post_init__(self):
        rate = as_fraction(self.frame_rate)
        if rate <= 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate!r}")
        frames = stack_frames(self.frames)
        object.__setattr__(self, "frame_rate", rate)
        object.__setattr__(self, "frames", _frozen(frames))
        if abs(self.duration - self.audio.duration) > 1 / rate:
            raise SegmentError(
                f"audio ({float(self.audio.duration):.3f} s) and video "
                f"({float(self.duration):.3f} s) durations differ by more than one frame"
            )

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> Fraction:
        """Length of the timeline, taken from the video frames."""
        return self.frame_count / self.frame_rate

    def __eq__(self, other):
        if not isinstance(other, VideoAsset):
            return NotImplemented
        return (
            self.frame_rate == other.frame_rate
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
            and self.audio == other.audio
        )


@dataclass(frozen=True, eq=False)
class Segment:
    """A contiguous slice ``[start, start + duration)`` of an asset's timeline."""

    index: int
    start: Fraction
    duration: Fraction
    frames: np.ndarray
    audio: AudioTrack
    frame_rate: Fraction
    verdict: Optional[Verdict] = None

    def __post_init__(self):
        object.__setattr__(self, "start", as_fraction(self.start))
        object.__setattr__(self, "duration", as_fraction(self.duration))
        object.__setattr__(self, "frame_rate", as_fraction(self.frame_rate))
        if self.start < 0:
            raise SegmentError("segment start must be non-negative")
        if self.duration <= 0:
            raise SegmentError("segment duration must be positive")
        object.__setattr__(self, "frames", _frozen(stack_frames(self.frames)))

    @property
    def end(self) -> Fraction:
        return self.start + self.duration

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def flagged(self) -> bool:
        return self.verdict is not None and self.verdict.label is Label.INAPPROPRIATE

    def with_verdict(self, verdict: Verdict) -> "Segment":
        return replace(self, verdict=verdict)


def _first_frame_at_or_after(t: Fraction, frame_rate: Fraction) -> int:
    return math.ceil(t * frame_rate)


def _sample_index(t: Fraction, sample_rate: int) -> int:
    # round half up; each sample belongs to exactly one segment
    return math.floor(t * sample_rate + Fraction(1, 2))


def split_segments(asset: VideoAsset, max_len: Number = DEFAULT_SEGMENT_SECONDS) -> list[Segment]:
    """Cut ``asset`` into consecutive segments of ``max_len`` seconds.

    The final segment is shorter when the duration is not a multiple of
    ``max_len``; it is never padded.
    """
    length = as_fraction(max_len)
    if length <= 0:
        raise SegmentError(f"max_len must be positive, got {max_len!r}")
    if asset.frame_count == 0:
        raise SegmentError("empty input: asset has no frames")

    total = asset.duration
    count = math.ceil(total / length)
    n_frames = asset.frame_count
    n_samples = len(asset.audio)
    rate = asset.audio.sample_rate

    segments = []
    for i in range(count):
        start = i * length
        end = min(start + length, total)
        last = i == count - 1
        f0 = _first_frame_at_or_after(start, asset.frame_rate)
        f1 = n_frames if last else _first_frame_at_or_after(end, asset.frame_rate)
        s0 = min(_sample_index(start, rate), n_samples)
        s1 = n_samples if last else min(_sample_index(end, rate), n_samples)
        segments.append(
            Segment(
                index=i,
                start=start,
                duration=end - start,
                frames=asset.frames[f0:f1],
                audio=AudioTrack(rate, asset.audio.samples[s0:s1]),
                frame_rate=asset.frame_rate,
            )
        )
    return segments


def merge_segments(segments: Sequence[Segment], name: str = "video") -> VideoAsset:
    """Concatenate contiguous segments back into one asset."""
    if not segments:
        raise SegmentError("empty input: no segments to merge")
    first = segments[0]
    if first.start != 0:
        raise SegmentError("non-contiguous segments: timeline does not start at 0")
    shape = first.frames.shape[1:]
    for prev, seg in zip(segments, segments[1:]):
        if seg.start != prev.end:
            raise SegmentError(
                f"non-contiguous segments: segment {seg.index} starts at {float(seg.start):.3f} s, "
                f"previous ends at {float(prev.end):.3f} s"
            )
    for seg in segments:
        if (
            seg.frame_rate != first.frame_rate
            or seg.audio.sample_rate != first.audio.sample_rate
            or seg.frames.shape[1:] != shape
        ):
            raise SegmentError(f"incompatible segments: segment {seg.index} differs in size or rate")

    frames = np.concatenate([seg.frames for seg in segments])
    samples = np.concatenate([seg.audio.samples for seg in segments])
    return VideoAsset(
        frame_rate=first.frame_rate,
        frames=frames,
        audio=AudioTrack(first.audio.sample_rate, samples),
        name=name,
    )


def sample_frames(
    source: Union[VideoAsset, Segment], rate: Number = 1, cap: Number = 360
) -> np.ndarray:
    """Pick frames at ``0, 1/rate, 2/rate, ...`` seconds, below ``min(duration, cap)``.

    Each timestamp takes the latest decoded frame at or before it.  Timestamps
    are relative to the start of ``source``.
    """
    rate = as_fraction(rate)
    cap = as_fraction(cap)
    if rate <= 0 or cap <= 0:
        raise ValueError("rate and cap must be positive")
    n = source.frame_count
    if n == 0:
        return source.frames[:0]

    if isinstance(source, Segment):
        offset = source.start
        first_index = _first_frame_at_or_after(source.start, source.frame_rate)
    else:
        offset = Fraction(0)
        first_index = 0
    span = min(source.duration, cap)
    count = min(math.ceil(span * rate), n)
    picks = []
    for k in range(count):
        absolute = math.floor((offset + k / rate) * source.frame_rate)
        picks.append(min(max(absolute - first_index, 0), n - 1))
    return source.frames[picks]
