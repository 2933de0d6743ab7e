import numpy as np
import pytest

from scenecensor.media import AudioTrack, VideoAsset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_asset(seconds, fps=10, sample_rate=8000, size=(4, 4), seed=0, name="clip"):
    rng = np.random.default_rng(seed)
    n_frames = round(seconds * fps)
    n_samples = round(seconds * sample_rate)
    frames = rng.integers(0, 256, size=(n_frames, *size, 3), dtype=np.uint8)
    samples = rng.integers(-32768, 32768, size=n_samples, dtype=np.int16)
    return VideoAsset(fps, frames, AudioTrack(sample_rate, samples), name=name)


@pytest.fixture
def asset_factory():
    return make_asset


# acceptance criteria register one "PASS"/"FAIL" line each; they are echoed
# in the terminal summary so they show up even with output capturing on
ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
