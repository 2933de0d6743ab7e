"""Embedding providers and the fusion of frame/audio embeddings into one feature.

Three providers are available:

* :class:`SyntheticProvider` hashes the raw content into a reproducible
  pseudo-random vector (FNV-1a seed, SplitMix64 stream).  Useful for tests
  and for exercising the pipeline without a network.
* :class:`PrecomputedProvider` returns rows stored in EMB1 files.
* :class:`ExternalProvider` runs a child process that speaks Y4M/WAV on stdin
  and answers with float32 rows on stdout.
"""

from __future__ import annotations

import math
import shlex
import struct
import subprocess
import threading
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, MediaFormatError, ProviderError
from .media import AudioTrack, as_fraction
from .media_io import write_wav, write_y4m

IMAGE_EMBEDDING_DIM = 2048
AUDIO_EMBEDDING_DIM = 128
IMAGE_FEATURE_DIM = 1024
AUDIO_FEATURE_DIM = 128
FEATURE_DIM = IMAGE_FEATURE_DIM + AUDIO_FEATURE_DIM
DEFAULT_AUDIO_WINDOW = 1.0

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 started from ``seed``, as uint64."""
    steps = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + steps * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def synthetic_embedding(content: bytes, dim: int) -> np.ndarray:
    """Deterministic vector in ``[-1, 1)^dim`` derived from ``content``."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    words = splitmix64(fnv1a_64(content), dim)
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0


def audio_windows(audio: AudioTrack, window) -> list[np.ndarray]:
    """Split samples into non-overlapping windows.

    A trailing partial window is kept when it spans at least half a window.
    """
    window = as_fraction(window)
    if window <= 0:
        raise ValueError("window must be positive")
    size = max(1, math.floor(window * audio.sample_rate + as_fraction(0.5)))
    samples = audio.samples
    full, tail = divmod(len(samples), size)
    chunks = [samples[i * size : (i + 1) * size] for i in range(full)]
    if tail and 2 * tail >= size:
        chunks.append(samples[full * size :])
    return chunks


# -- EMB1 files ----------------------------------------------------------------

EMB_MAGIC = b"EMB1"


def write_emb(rows: np.ndarray) -> bytes:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("EMB1 rows must be a 2-D array")
    count, dim = rows.shape
    return EMB_MAGIC + struct.pack("<II", dim, count) + rows.astype("<f4").tobytes()


def read_emb(data: bytes) -> np.ndarray:
    """Parse an EMB1 blob into a ``(rows, dim)`` float64 array."""
    data = bytes(data)
    if len(data) < 12 or data[:4] != EMB_MAGIC:
        raise MediaFormatError("not an EMB1 file: bad magic")
    dim, count = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * dim * count
    if len(data) != expected:
        raise MediaFormatError(f"EMB1 size mismatch: expected {expected} bytes, found {len(data)}")
    rows = np.frombuffer(data, dtype="<f4", offset=12).reshape(count, dim).astype(np.float64)
    if not np.all(np.isfinite(rows)):
        raise MediaFormatError("EMB1 file contains non-finite values")
    return rows


def load_emb(path) -> np.ndarray:
    path = Path(path)
    try:
        return read_emb(path.read_bytes())
    except MediaFormatError as exc:
        raise MediaFormatError(f"{path}: {exc}") from exc


# -- providers -----------------------------------------------------------------


class EmbeddingProvider:
    """Base class: maps frames and audio windows to fixed-size vectors."""

    kind = "abstract"

    def __init__(self, image_dim: int = IMAGE_EMBEDDING_DIM, audio_dim: int = AUDIO_EMBEDDING_DIM):
        self.image_dim = image_dim
        self.audio_dim = audio_dim

    def image(self, frames: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def audio(self, audio: AudioTrack, window) -> np.ndarray:
        raise NotImplementedError

    def for_segment(self, index: int) -> "EmbeddingProvider":
        """Provider to use for segment ``index``; most providers are segment-agnostic."""
        return self


class SyntheticProvider(EmbeddingProvider):
    kind = "synthetic"

    def image(self, frames):
        return np.array([synthetic_embedding(np.ascontiguousarray(f).tobytes(), self.image_dim) for f in frames])

    def audio(self, audio, window):
        chunks = audio_windows(audio, window)
        rows = [synthetic_embedding(c.astype("<i2").tobytes(), self.audio_dim) for c in chunks]
        return np.array(rows).reshape(len(rows), self.audio_dim)


class PrecomputedProvider(EmbeddingProvider):
    """Serves stored rows; the row counts must match the request."""

    kind = "precomputed"

    def __init__(self, image_rows: np.ndarray, audio_rows: np.ndarray):
        image_rows = np.asarray(image_rows, dtype=np.float64)
        audio_rows = np.asarray(audio_rows, dtype=np.float64)
        if image_rows.ndim != 2 or audio_rows.ndim != 2:
            raise ValueError("stored embeddings must be 2-D (rows, dim)")
        super().__init__(image_rows.shape[1], audio_rows.shape[1])
        self.image_rows = image_rows
        self.audio_rows = audio_rows

    def image(self, frames):
        if len(frames) != len(self.image_rows):
            raise ProviderError(
                f"embedding count mismatch: {len(frames)} frames but {len(self.image_rows)} stored image rows"
            )
        return self.image_rows.copy()

    def audio(self, audio, window):
        expected = len(audio_windows(audio, window))
        if expected != len(self.audio_rows):
            raise ProviderError(
                f"embedding count mismatch: {expected} audio windows but {len(self.audio_rows)} stored audio rows"
            )
        return self.audio_rows.copy()


class PrecomputedDirectory(EmbeddingProvider):
    """Directory of per-segment EMB1 files named ``seg00000_image.emb`` / ``seg00000_audio.emb``."""

    kind = "precomputed"

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ProviderError(f"precomputed embedding directory not found: {self.root}")
        super().__init__(0, 0)

    def paths(self, index: int) -> tuple[Path, Path]:
        stem = f"seg{index:05d}"
        return self.root / f"{stem}_image.emb", self.root / f"{stem}_audio.emb"

    def for_segment(self, index):
        image_path, audio_path = self.paths(index)
        try:
            return PrecomputedProvider(load_emb(image_path), load_emb(audio_path))
        except (OSError, MediaFormatError) as exc:
            raise ProviderError(f"segment {index}: {exc}") from exc

    def image(self, frames):
        raise ProviderError("PrecomputedDirectory needs a segment index; use for_segment()")

    audio = image


class ExternalProvider(EmbeddingProvider):
    """Delegates to a child process.

    The command is run as ``<cmd> image`` with a Y4M stream on stdin, or as
    ``<cmd> audio <window>`` with a WAV file on stdin.  It must write
    ``rows x dim`` little-endian float32 values to stdout.
    """

    kind = "external"

    def __init__(self, command: Union[str, Sequence[str]], image_dim=IMAGE_EMBEDDING_DIM,
                 audio_dim=AUDIO_EMBEDDING_DIM, timeout: Optional[float] = None):
        super().__init__(image_dim, audio_dim)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._lock = threading.Lock()

    def _run(self, args: list[str], payload: bytes, rows: int, dim: int) -> np.ndarray:
        with self._lock:
            try:
                proc = subprocess.run(
                    self.command + args, input=payload, capture_output=True, timeout=self.timeout, check=False
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise ProviderError(f"external provider {self.command[0]!r} failed: {exc}") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", "replace").strip()
            raise ProviderError(f"external provider exited with status {proc.returncode}: {stderr}")
        expected = rows * dim * 4
        if len(proc.stdout) != expected:
            raise ProviderError(
                f"embedding count mismatch: external provider returned {len(proc.stdout)} bytes, expected {expected}"
            )
        out = np.frombuffer(proc.stdout, dtype="<f4").reshape(rows, dim).astype(np.float64)
        if not np.all(np.isfinite(out)):
            raise ProviderError("external provider returned non-finite values")
        return out

    def image(self, frames):
        return self._run(["image"], write_y4m(1, frames), len(frames), self.image_dim)

    def audio(self, audio, window):
        rows = len(audio_windows(audio, window))
        if rows == 0:
            return np.zeros((0, self.audio_dim))
        return self._run(["audio", str(float(window))], write_wav(audio), rows, self.audio_dim)


def embed_frames(provider: EmbeddingProvider, frames) -> np.ndarray:
    """One image embedding per frame, as a ``(len(frames), image_dim)`` array."""
    if len(frames) == 0:
        raise ValueError("embed_frames needs at least one frame")
    rows = np.asarray(provider.image(frames), dtype=np.float64)
    if rows.shape != (len(frames), provider.image_dim):
        raise ProviderError(f"provider returned image embeddings of shape {rows.shape}")
    return rows


def embed_audio(provider: EmbeddingProvider, audio: AudioTrack, window=DEFAULT_AUDIO_WINDOW) -> np.ndarray:
    """One audio embedding per window (see :func:`audio_windows`)."""
    if as_fraction(window) <= 0:
        raise ValueError("window must be positive")
    rows = np.asarray(provider.audio(audio, window), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != provider.audio_dim:
        raise ProviderError(f"provider returned audio embeddings of shape {rows.shape}")
    return rows


def pool(frame_embs: np.ndarray, audio_embs: np.ndarray, audio_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean-pool per-frame and per-window embeddings; no audio pools to zeros."""
    frame_embs = np.atleast_2d(np.asarray(frame_embs, dtype=np.float64))
    if frame_embs.shape[0] == 0:
        raise ValueError("fuse needs at least one frame embedding")
    audio_embs = np.asarray(audio_embs, dtype=np.float64)
    if audio_embs.size == 0:
        audio_mean = np.zeros(audio_dim)
    else:
        audio_mean = np.atleast_2d(audio_embs).mean(axis=0)
    return frame_embs.mean(axis=0), audio_mean


def fuse(frame_embs, audio_embs, pca_img, pca_aud) -> np.ndarray:
    """Segment feature: whitened mean image embedding, then whitened mean audio embedding."""
    image_mean, audio_mean = pool(frame_embs, audio_embs, pca_aud.in_dim)
    if image_mean.shape[0] != pca_img.in_dim or audio_mean.shape[0] != pca_aud.in_dim:
        raise DimensionError(
            f"feature dimension mismatch: got image {image_mean.shape[0]} / audio {audio_mean.shape[0]}, "
            f"models expect {pca_img.in_dim} / {pca_aud.in_dim}"
        )
    return np.concatenate([pca_img.transform(image_mean), pca_aud.transform(audio_mean)])
