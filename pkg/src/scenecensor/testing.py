"""Generators for synthetic media and embedding datasets (tests, demos)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

import numpy as np

from .embeddings import write_emb
from .media import AudioTrack, Label, VideoAsset
from .media_io import save_media


def synthetic_asset(seconds: int = 60, fps: int = 2, size: tuple = (16, 16), sample_rate: int = 800,
                    seed: int = 0, name: str = "synthetic") -> VideoAsset:
    """Noisy frames and a random 16-bit audio track of exactly ``seconds``."""
    rng = np.random.default_rng(seed)
    h, w = size
    frames = rng.integers(0, 256, size=(seconds * fps, h, w, 3), dtype=np.uint8)
    samples = rng.integers(-20000, 20000, size=seconds * sample_rate, dtype=np.int16)
    return VideoAsset(fps, frames, AudioTrack(sample_rate, samples), name=name)


def write_asset(asset: VideoAsset, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    video, audio = directory / f"{asset.name}.y4m", directory / f"{asset.name}.wav"
    save_media(asset, video, audio)
    return video, audio


def cluster_embeddings(n_per_class: int = 200, image_dim: int = 1024, audio_dim: int = 128,
                       separation: float = 10.0, spread: float = 1.0, seed: int = 0):
    """Two Gaussian clusters whose centres are ``separation * spread`` apart.

    Returns ``(image, audio, labels)``; the first ``n_per_class`` rows are
    appropriate (-1), the rest inappropriate (+1).
    """
    rng = np.random.default_rng(seed)
    dim = image_dim + audio_dim
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    offset = 0.5 * separation * spread * direction
    labels = np.repeat([int(Label.APPROPRIATE), int(Label.INAPPROPRIATE)], n_per_class)
    points = spread * rng.standard_normal((2 * n_per_class, dim)) + np.outer(labels, offset)
    return points[:, :image_dim], points[:, image_dim:], labels


def write_emb_manifest(directory, image, audio, labels, rows_per_item: int = 1,
                       jitter: float = 0.0, seed: Optional[int] = 0) -> Path:
    """Write one EMB1 pair per item plus ``manifest.csv``; returns the manifest path.

    With ``rows_per_item > 1`` each item gets several rows whose mean is the
    given vector (zero-mean jitter is added and removed again).
    """
    directory = Path(directory)
    (directory / "emb").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["id", "label", "image_emb", "audio_emb"])
        for i, (img, aud, label) in enumerate(zip(image, audio, labels)):
            item = f"item{i:04d}"
            paths = []
            for kind, vec in (("image", img), ("audio", aud)):
                noise = jitter * rng.standard_normal((rows_per_item, len(vec)))
                rows = vec + noise - noise.mean(axis=0)
                rel = Path("emb") / f"{item}_{kind}.emb"
                (directory / rel).write_bytes(write_emb(rows))
                paths.append(rel.as_posix())
            out.writerow([item, Label(int(label)).text, *paths])
    return manifest
