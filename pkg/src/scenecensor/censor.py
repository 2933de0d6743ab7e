"""Censoring of flagged segments: Gaussian blur, muting, and the XML scene report."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import MediaFormatError, SegmentError
from .media import AudioTrack, Label, Segment

DEFAULT_SIGMA = 10.0


@dataclass(frozen=True, eq=False)
class BlurKernel:
    sigma: float
    radius: int
    taps: np.ndarray


def gaussian_kernel(sigma: float) -> BlurKernel:
    """Normalised 1-D Gaussian taps over ``[-ceil(3 sigma), ceil(3 sigma)]``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    radius = math.ceil(3 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2 * sigma * sigma))
    return BlurKernel(sigma=float(sigma), radius=radius, taps=taps / taps.sum())


def gaussian_2d(x, y, sigma: float):
    """Unnormalised 2-D Gaussian density ``exp(-(x^2 + y^2) / 2 sigma^2) / (2 pi sigma^2)``."""
    return np.exp(-(np.square(x) + np.square(y)) / (2 * sigma * sigma)) / (2 * math.pi * sigma * sigma)


def _convolve_axis(image: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    radius = len(taps) // 2
    pad = [(0, 0)] * image.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(image, pad, mode="edge")
    out = np.zeros(image.shape, dtype=np.float64)
    size = image.shape[axis]
    for i, tap in enumerate(taps):
        out += tap * padded.take(np.arange(i, i + size), axis=axis)
    return out


def blur_frame(frame: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Separable Gaussian blur with replicated edges (horizontal pass, then vertical)."""
    kernel = gaussian_kernel(sigma)
    work = np.asarray(frame, dtype=np.float64)
    work = _convolve_axis(work, kernel.taps, axis=-2)
    work = _convolve_axis(work, kernel.taps, axis=-3)
    return np.clip(np.floor(work + 0.5), 0, 255).astype(np.uint8)


def blur_frames(frames: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Blur a ``(n, h, w, 3)`` stack; same result as blurring frame by frame."""
    if len(frames) == 0:
        return np.array(frames, copy=True)
    return blur_frame(frames, sigma)


def mute_audio(track: AudioTrack) -> AudioTrack:
    """Silence of the same length; timing is preserved for the merge."""
    return AudioTrack(track.sample_rate, np.zeros(len(track.samples), dtype=np.int16))


def censor_segment(segment: Segment, sigma: float = DEFAULT_SIGMA) -> Segment:
    if not segment.flagged:
        raise SegmentError(f"censoring appropriate segment {segment.index}")
    return replace(segment, frames=blur_frames(segment.frames, sigma), audio=mute_audio(segment.audio))


# -- report --------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    start: float
    duration: float
    score: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class CensorReport:
    video_name: str
    total_duration: float
    scenes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        validate_report(self)


def validate_report(report: CensorReport) -> None:
    if not report.total_duration >= 0:
        raise ValueError("negative total duration")
    previous_end = 0.0
    for scene in report.scenes:
        if scene.start < 0 or scene.duration < 0:
            raise ValueError(f"negative time in scene starting at {scene.start}")
        if scene.start < previous_end - 1e-9:
            raise ValueError(f"overlapping or unsorted scenes at {scene.start:.3f} s")
        if scene.end > report.total_duration + 1e-9:
            raise ValueError(f"scene at {scene.start:.3f} s extends past the end of the video")
        previous_end = scene.end


def coalesce(segments: Sequence[Segment]) -> list[Scene]:
    """Scenes for runs of adjacent flagged segments; score is the run's maximum."""
    scenes: list[Scene] = []
    run_start = run_end = None
    score = -math.inf
    for seg in sorted(segments, key=lambda s: s.start):
        if seg.flagged:
            if run_start is not None and seg.start == run_end:
                run_end = seg.end
                score = max(score, seg.verdict.score)
                continue
            if run_start is not None:
                scenes.append(Scene(float(run_start), float(run_end - run_start), score))
            run_start, run_end, score = seg.start, seg.end, seg.verdict.score
        elif run_start is not None:
            scenes.append(Scene(float(run_start), float(run_end - run_start), score))
            run_start = None
    if run_start is not None:
        scenes.append(Scene(float(run_start), float(run_end - run_start), score))
    return scenes


def build_report(name: str, total_duration, segments: Sequence[Segment]) -> CensorReport:
    return CensorReport(name, float(total_duration), tuple(coalesce(segments)))


def _fmt(value: float) -> str:
    text = f"{value:.3f}"
    return "0.000" if text == "-0.000" else text


def emit_xml(report: CensorReport) -> bytes:
    validate_report(report)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    root = f"<censorship video={quoteattr(report.video_name)} duration=\"{_fmt(report.total_duration)}\""
    if not report.scenes:
        lines.append(root + "/>")
    else:
        lines.append(root + ">")
        for s in report.scenes:
            lines.append(
                f'  <scene start="{_fmt(s.start)}" duration="{_fmt(s.duration)}" score="{_fmt(s.score)}"/>'
            )
        lines.append("</censorship>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_xml(data: bytes) -> CensorReport:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise MediaFormatError(f"malformed XML: {exc}") from None
    if root.tag != "censorship":
        raise MediaFormatError(f"malformed XML: root element is <{root.tag}>, expected <censorship>")
    try:
        scenes = []
        for child in root:
            if child.tag != "scene":
                raise MediaFormatError(f"malformed XML: unexpected element <{child.tag}>")
            scenes.append(Scene(float(child.attrib["start"]), float(child.attrib["duration"]),
                                float(child.attrib["score"])))
        return CensorReport(root.attrib["video"], float(root.attrib["duration"]), tuple(scenes))
    except KeyError as exc:
        raise MediaFormatError(f"malformed XML: missing attribute {exc}") from None
    except ValueError as exc:
        raise MediaFormatError(f"invalid report: {exc}") from None


def inappropriate_segments(segments: Sequence[Segment]) -> list[int]:
    return [s.index for s in segments if s.verdict is not None and s.verdict.label is Label.INAPPROPRIATE]
