"""End-to-end flows: train a bundle, evaluate it, censor a video.

Dataset manifests are UTF-8 CSV files with one of two headers::

    id,label,image_emb,audio_emb     (EMB1 files: one row per frame / window)
    id,label,video,audio             (Y4M + WAV files, embedded by a provider)

Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import embeddings as emb
from .bundle import ModelBundle, ModelConfig, config_of, dump_bundle, load_bundle, train_bundle
from .censor import DEFAULT_SIGMA, CensorReport, build_report, censor_segment, emit_xml
from .errors import DimensionError, InputError, MediaFormatError, ProviderError, TrainingError
from .media import DEFAULT_SEGMENT_SECONDS, Label, Segment, Verdict, as_fraction, merge_segments, sample_frames, split_segments
from .media_io import atomic_write, load_media, write_wav, write_y4m
from .metrics import CvReport, class_reports, cross_validate, stratified_holdout

log = logging.getLogger(__name__)

VIDEO_CAP_SECONDS = 360
EMB_COLUMNS = ("id", "label", "image_emb", "audio_emb")
MEDIA_COLUMNS = ("id", "label", "video", "audio")


@dataclass
class Dataset:
    ids: list
    image: np.ndarray  # pooled image embeddings, one row per item
    audio: np.ndarray  # pooled audio embeddings
    labels: np.ndarray  # -1 / +1

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.ids[i] for i in idx], self.image[idx], self.audio[idx], self.labels[idx])


def make_provider(spec: str, image_dim: int = emb.IMAGE_EMBEDDING_DIM,
                  audio_dim: int = emb.AUDIO_EMBEDDING_DIM) -> emb.EmbeddingProvider:
    """Provider from ``synthetic``, ``precomputed:<dir>`` or ``external:<cmd>``."""
    kind, _, arg = spec.partition(":")
    if kind == "synthetic" and not arg:
        return emb.SyntheticProvider(image_dim, audio_dim)
    if kind == "precomputed" and arg:
        return emb.PrecomputedDirectory(arg)
    if kind == "external" and arg:
        return emb.ExternalProvider(arg, image_dim, audio_dim)
    raise InputError(f"unknown provider {spec!r}; use synthetic, precomputed:<dir> or external:<cmd>")


def _pool_rows(image_rows: np.ndarray, audio_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return emb.pool(image_rows, audio_rows, audio_rows.shape[1])


def load_dataset(manifest, provider: Optional[emb.EmbeddingProvider] = None,
                 window=emb.DEFAULT_AUDIO_WINDOW, frame_rate=1, cap=VIDEO_CAP_SECONDS) -> Dataset:
    """Read a manifest and mean-pool each item's embeddings.

    All unreadable entries are reported together in one :class:`InputError`.
    """
    manifest = Path(manifest)
    try:
        with open(manifest, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, skipinitialspace=True)
            header = tuple(reader.fieldnames or ())
            rows = list(reader)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"cannot read manifest {manifest}: {exc}") from None
    if not rows:
        raise InputError(f"manifest {manifest} has no entries")
    if header == EMB_COLUMNS:
        media = False
    elif header == MEDIA_COLUMNS:
        media = True
        provider = provider or emb.SyntheticProvider()
    else:
        raise InputError(f"manifest header must be {','.join(EMB_COLUMNS)} or {','.join(MEDIA_COLUMNS)}")

    base = manifest.parent
    ids, images, audios, labels, problems = [], [], [], [], []
    seen = set()
    for line, row in enumerate(rows, start=2):
        item = row["id"]
        try:
            if item in seen:
                raise InputError(f"duplicate id {item!r}")
            seen.add(item)
            label = Label.parse(row["label"])
            if media:
                asset = load_media(base / row["video"], base / row["audio"], name=item)
                frames = sample_frames(asset, frame_rate, cap)
                image_rows = emb.embed_frames(provider, frames)
                audio_rows = emb.embed_audio(provider, asset.audio, window)
            else:
                image_rows = emb.load_emb(base / row["image_emb"])
                audio_rows = emb.load_emb(base / row["audio_emb"])
            image_mean, audio_mean = _pool_rows(image_rows, audio_rows)
        except (OSError, ValueError, ProviderError) as exc:
            problems.append(f"line {line} (id {item!r}): {exc}")
            continue
        ids.append(item)
        images.append(image_mean)
        audios.append(audio_mean)
        labels.append(int(label))

    for name, vectors in (("image", images), ("audio", audios)):
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            problems.append(f"{name} embeddings have differing dimensions {sorted(dims)}")
    if problems:
        raise InputError("unreadable manifest entries:\n  " + "\n  ".join(problems))
    return Dataset(ids, np.array(images), np.array(audios), np.array(labels, dtype=int))


@dataclass
class TrainResult:
    bundle: ModelBundle
    test_reports: dict
    train_size: int
    test_size: int


def _holdout(dataset: Dataset, seed: int, fraction: float):
    """Stratified (train, test) split; ``fraction == 0`` keeps everything for training."""
    if len(np.unique(dataset.labels)) < 2:
        raise TrainingError("degenerate labels: manifest contains a single class")
    if not 0 <= fraction < 1:
        raise InputError(f"test fraction must lie in [0, 1), got {fraction}")
    if fraction == 0:
        return dataset, dataset.subset(np.arange(0))
    train_idx, test_idx = stratified_holdout(dataset.labels, fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def run_train(manifest, out_path, cfg: ModelConfig = ModelConfig(), provider=None,
              test_fraction: float = 0.1) -> TrainResult:
    """Hold out a stratified test split, fit PCA + SVM on the rest, write the bundle."""
    dataset = manifest if isinstance(manifest, Dataset) else load_dataset(
        manifest, provider, cfg.audio_window, cfg.frame_rate)
    train, test = _holdout(dataset, cfg.seed, test_fraction)
    bundle = train_bundle(train.image, train.audio, train.labels, cfg)
    reports = class_reports(test.labels, bundle.predict_pooled(test.image, test.audio)) if len(test) else {}
    atomic_write(out_path, dump_bundle(bundle))
    return TrainResult(bundle, reports, len(train), len(test))


@dataclass
class EvalResult:
    cv: CvReport
    test_reports: dict


def read_bundle(path) -> ModelBundle:
    path = Path(path)
    try:
        return load_bundle(path.read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read model bundle {path}: {exc}") from None
    except MediaFormatError as exc:
        raise MediaFormatError(f"{path}: {exc}") from None


def run_eval(manifest, bundle, k: int = 20, seed: Optional[int] = None, provider=None,
             test_fraction: float = 0.1) -> EvalResult:
    """k-fold CV on the training portion, plus the bundle scored on the held-out split.

    The split uses the bundle's training seed, so the test items are the ones
    the bundle never saw.
    """
    if not isinstance(bundle, ModelBundle):
        bundle = read_bundle(bundle)
    cfg = config_of(bundle)
    dataset = manifest if isinstance(manifest, Dataset) else load_dataset(
        manifest, provider, cfg.audio_window, cfg.frame_rate)
    if dataset.image.shape[1] != bundle.image_embedding_dim or dataset.audio.shape[1] != bundle.audio_embedding_dim:
        raise DimensionError(
            f"feature dimension mismatch: manifest embeddings are {dataset.image.shape[1]}/{dataset.audio.shape[1]}, "
            f"bundle expects {bundle.image_embedding_dim}/{bundle.audio_embedding_dim}"
        )
    train, test = _holdout(dataset, cfg.seed, test_fraction)
    if not 2 <= k <= len(train):
        raise InputError(f"k must lie in [2, {len(train)}] for {len(train)} training items, got {k}")
    cv = cross_validate((train.image, train.audio), train.labels, cfg, k, cfg.seed if seed is None else seed)
    reports = class_reports(test.labels, bundle.predict_pooled(test.image, test.audio)) if len(test) else {}
    return EvalResult(cv, reports)


# -- censoring -----------------------------------------------------------------

Classifier = Callable[[Segment], Verdict]


@dataclass
class CensorOptions:
    seg_len: float = DEFAULT_SEGMENT_SECONDS
    sigma: float = DEFAULT_SIGMA
    provider: str = "synthetic"
    workers: Optional[int] = None


@dataclass
class CensorResult:
    report: CensorReport
    video_path: Path
    audio_path: Path
    report_path: Path
    segments: list = field(default_factory=list)


def bundle_classifier(bundle: ModelBundle, provider: emb.EmbeddingProvider) -> Classifier:
    def classify(segment: Segment) -> Verdict:
        try:
            return bundle.classify(segment, provider.for_segment(segment.index))
        except (ProviderError, DimensionError) as exc:
            raise type(exc)(f"segment {segment.index} ({float(segment.start):.3f} s): {exc}") from exc

    return classify


def run_censor(video_path, audio_path, out_dir, report_path, bundle=None,
               options: CensorOptions = CensorOptions(), classifier: Optional[Classifier] = None) -> CensorResult:
    """Split, classify, blur and mute flagged segments, merge, and write outputs.

    Outputs are ``<out_dir>/<name>.y4m``, ``<out_dir>/<name>.wav`` and the XML
    report.  Nothing is written unless every step succeeds.
    """
    asset = load_media(video_path, audio_path)
    if as_fraction(options.seg_len) < 1 / asset.frame_rate:
        raise InputError("segment length is shorter than one frame period")
    if not options.sigma > 0:
        raise InputError("sigma must be positive")
    if classifier is None:
        if bundle is None:
            raise InputError("run_censor needs a model bundle or a classifier")
        if not isinstance(bundle, ModelBundle):
            bundle = read_bundle(bundle)
        provider = make_provider(options.provider, bundle.image_embedding_dim, bundle.audio_embedding_dim)
        classifier = bundle_classifier(bundle, provider)

    segments = split_segments(asset, options.seg_len)
    workers = options.workers or os.cpu_count() or 1

    def process(segment: Segment) -> Segment:
        segment = segment.with_verdict(classifier(segment))
        return censor_segment(segment, options.sigma) if segment.flagged else segment

    if workers > 1 and len(segments) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            processed = list(pool.map(process, segments))
    else:
        processed = [process(s) for s in segments]

    merged = merge_segments(processed, name=asset.name)
    report = build_report(asset.name, asset.duration, processed)
    n_flagged = sum(s.flagged for s in processed)
    log.info("%s: %d of %d segments censored", asset.name, n_flagged, len(processed))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    video_out = out_dir / f"{asset.name}.y4m"
    audio_out = out_dir / f"{asset.name}.wav"
    report_path = Path(report_path)
    _write_all({
        video_out: write_y4m(merged.frame_rate, merged.frames),
        audio_out: write_wav(merged.audio),
        report_path: emit_xml(report),
    })
    return CensorResult(report, video_out, audio_out, report_path, processed)


def _write_all(outputs: dict) -> None:
    """Write every payload to a temporary file first, then rename them all."""
    staged = []
    try:
        for path, data in outputs.items():
            tmp = path.with_name(f".{path.name}.partial")
            tmp.write_bytes(data)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
