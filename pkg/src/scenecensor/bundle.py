"""The trained classifier bundle (two whitening PCAs + SVM) and its file format.

File layout, all little-endian::

    b"ICMB"  u16 version
    repeated sections:  u8 name_len, name (ASCII), u64 payload_len, payload

Sections are ``PCA_IMG``, ``PCA_AUD``, ``SVM`` and ``CONFIG`` (UTF-8 JSON).
Floats are 64-bit.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import embeddings as emb
from .errors import DimensionError, InputError, MediaFormatError, TrainingError
from .media import Label, Verdict, sample_frames
from .pca import DEFAULT_EPSILON, PcaModel, fit_pca
from .svm import KernelSpec, SvmModel, TrainConfig, train_smo

log = logging.getLogger(__name__)

MAGIC = b"ICMB"
VERSION = 1
ROWS_PER_DIM = 4


@dataclass(frozen=True)
class ModelConfig:
    """Everything that determines a trained bundle besides the data."""

    image_dim: int = emb.IMAGE_FEATURE_DIM
    audio_dim: int = emb.AUDIO_FEATURE_DIM
    epsilon: float = DEFAULT_EPSILON
    kernel: str = "rbf"
    gamma: Optional[float] = None
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10000
    seed: int = 0
    sigma: float = 10.0
    seg_len: float = 5.0
    audio_window: float = emb.DEFAULT_AUDIO_WINDOW
    frame_rate: float = 1.0

    def __post_init__(self):
        checks = {
            "image_dim": self.image_dim >= 1,
            "audio_dim": self.audio_dim >= 1,
            "epsilon": self.epsilon >= 0,
            "C": self.C > 0,
            "tol": self.tol > 0,
            "gamma": self.gamma is None or self.gamma > 0,
            "kernel": self.kernel in ("rbf", "linear"),
            "sigma": self.sigma > 0,
            "seg_len": self.seg_len > 0,
            "audio_window": self.audio_window > 0,
            "frame_rate": self.frame_rate > 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise InputError(f"invalid model configuration: {', '.join(bad)}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(C=self.C, tol=self.tol, max_passes=self.max_passes, seed=self.seed)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    pca_img: PcaModel
    pca_aud: PcaModel
    svm: SvmModel
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pca_img.out_dim + self.pca_aud.out_dim != self.svm.dim:
            raise DimensionError(
                f"feature dimension mismatch: PCA outputs {self.pca_img.out_dim}+{self.pca_aud.out_dim} "
                f"but SVM expects {self.svm.dim}"
            )

    @property
    def image_embedding_dim(self) -> int:
        return self.pca_img.in_dim

    @property
    def audio_embedding_dim(self) -> int:
        return self.pca_aud.in_dim

    def features(self, image_means, audio_means) -> np.ndarray:
        """Fused features for pooled embeddings (one row per item)."""
        image_means = np.atleast_2d(np.asarray(image_means, dtype=np.float64))
        audio_means = np.atleast_2d(np.asarray(audio_means, dtype=np.float64))
        if image_means.shape[1] != self.pca_img.in_dim or audio_means.shape[1] != self.pca_aud.in_dim:
            raise DimensionError(
                f"feature dimension mismatch: embeddings are {image_means.shape[1]}/{audio_means.shape[1]}, "
                f"bundle expects {self.pca_img.in_dim}/{self.pca_aud.in_dim}"
            )
        return np.hstack([self.pca_img.transform(image_means), self.pca_aud.transform(audio_means)])

    def decision_pooled(self, image_means, audio_means) -> np.ndarray:
        return self.svm.decision(self.features(image_means, audio_means))

    def predict_pooled(self, image_means, audio_means) -> np.ndarray:
        return self.svm.predict(self.features(image_means, audio_means))

    def classify(self, source, provider: emb.EmbeddingProvider, cap=None) -> Verdict:
        """Verdict for a segment or whole asset: sample frames, embed, fuse, decide."""
        rate = self.config.get("frame_rate", 1.0)
        window = self.config.get("audio_window", emb.DEFAULT_AUDIO_WINDOW)
        frames = sample_frames(source, rate, cap if cap is not None else source.duration)
        if len(frames) == 0:
            raise DimensionError("cannot classify a segment without frames")
        image_rows = emb.embed_frames(provider, frames)
        audio_rows = emb.embed_audio(provider, source.audio, window)
        feature = emb.fuse(image_rows, audio_rows, self.pca_img, self.pca_aud)
        score = self.svm.decision(feature)
        label = Label.INAPPROPRIATE if score >= 0 else Label.APPROPRIATE
        return Verdict(label, score)

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.pca_img == other.pca_img
            and self.pca_aud == other.pca_aud
            and self.svm == other.svm
            and self.config == other.config
        )


def _effective_dim(requested: int, n: int, in_dim: int, what: str) -> int:
    # keep >= 4 rows per whitened direction; an under-sampled covariance's tail is noise
    dim = min(requested, in_dim, requested if n > ROWS_PER_DIM * requested else (n - 1) // ROWS_PER_DIM)
    if dim < requested:
        log.info("%s PCA reduced from %d to %d dimensions (%d training rows, %d inputs)",
                    what, requested, dim, n, in_dim)
    if dim < 1:
        raise TrainingError(f"insufficient data: cannot fit {what} PCA on {n} rows")
    return dim


def train_bundle(image_means, audio_means, labels, cfg: ModelConfig = ModelConfig()) -> ModelBundle:
    """Fit both PCAs on the training rows, fuse, and train the SVM.

    When the training set has at most ``4 * size`` rows, a PCA output size is
    capped at ``(N - 1) // 4``: the trailing directions of an under-sampled
    covariance are noise that whitening would blow up to unit variance.
    """
    image_means = np.asarray(image_means, dtype=np.float64)
    audio_means = np.asarray(audio_means, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = len(y)
    if image_means.shape[0] != n or audio_means.shape[0] != n:
        raise DimensionError("image, audio and label counts differ")
    if len(np.unique(y)) < 2:
        raise TrainingError("degenerate labels: training needs both classes")

    pca_img = fit_pca(image_means, _effective_dim(cfg.image_dim, n, image_means.shape[1], "image"), cfg.epsilon)
    pca_aud = fit_pca(audio_means, _effective_dim(cfg.audio_dim, n, audio_means.shape[1], "audio"), cfg.epsilon)
    X = np.hstack([pca_img.transform(image_means), pca_aud.transform(audio_means)])
    svm = train_smo(X, y, cfg.train_config(), cfg.kernel_spec())
    config = asdict(cfg)
    config["fitted"] = {
        "image_embedding_dim": pca_img.in_dim,
        "audio_embedding_dim": pca_aud.in_dim,
        "image_dim": pca_img.out_dim,
        "audio_dim": pca_aud.out_dim,
        "gamma": svm.kernel.gamma,
        "training_rows": n,
    }
    return ModelBundle(pca_img, pca_aud, svm, config)


def config_of(bundle: ModelBundle) -> ModelConfig:
    """The training configuration recorded in a bundle."""
    names = {f.name for f in fields(ModelConfig)}
    return ModelConfig(**{k: v for k, v in bundle.config.items() if k in names})


# -- serialization -------------------------------------------------------------


def _f64(array) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def _pack_pca(model: PcaModel) -> bytes:
    return (
        struct.pack("<IId", model.in_dim, model.out_dim, model.epsilon)
        + _f64(model.mean)
        + _f64(model.components)
        + _f64(model.eigenvalues)
    )


def _pack_svm(model: SvmModel) -> bytes:
    kind = {"linear": 0, "rbf": 1}[model.kernel.kind]
    gamma = model.kernel.gamma if model.kernel.gamma is not None else 0.0
    m, d = model.support_vectors.shape
    return struct.pack("<BdddII", kind, gamma, model.bias, model.C, m, d) + _f64(model.support_vectors) + _f64(
        model.dual_coefs
    )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MediaFormatError("truncated model bundle")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def done(self) -> bool:
        return self.pos == len(self.data)


def _unpack_pca(payload: bytes) -> PcaModel:
    r = _Reader(payload)
    in_dim, out_dim, epsilon = r.unpack("<IId")
    mean = r.floats(in_dim)
    components = r.floats(in_dim * out_dim).reshape(out_dim, in_dim)
    eigenvalues = r.floats(out_dim)
    if not r.done():
        raise MediaFormatError("PCA section has trailing bytes")
    return PcaModel(mean, components, eigenvalues, epsilon)


def _unpack_svm(payload: bytes) -> SvmModel:
    r = _Reader(payload)
    kind, gamma, bias, C, m, d = r.unpack("<BdddII")
    if kind not in (0, 1):
        raise MediaFormatError(f"unknown kernel code {kind}")
    kernel = KernelSpec("linear") if kind == 0 else KernelSpec("rbf", gamma)
    support_vectors = r.floats(m * d).reshape(m, d)
    dual_coefs = r.floats(m)
    if not r.done():
        raise MediaFormatError("SVM section has trailing bytes")
    return SvmModel(kernel, support_vectors, dual_coefs, bias, C)


def dump_bundle(bundle: ModelBundle) -> bytes:
    sections = [
        ("PCA_IMG", _pack_pca(bundle.pca_img)),
        ("PCA_AUD", _pack_pca(bundle.pca_aud)),
        ("SVM", _pack_svm(bundle.svm)),
        ("CONFIG", json.dumps(bundle.config, sort_keys=True).encode("utf-8")),
    ]
    out = [MAGIC, struct.pack("<H", VERSION)]
    for name, payload in sections:
        encoded = name.encode("ascii")
        out.append(struct.pack("<B", len(encoded)) + encoded + struct.pack("<Q", len(payload)) + payload)
    return b"".join(out)


def load_bundle(data: bytes) -> ModelBundle:
    data = bytes(data)
    if data[:4] != MAGIC:
        raise MediaFormatError("not a model bundle: bad magic")
    r = _Reader(data)
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise MediaFormatError(f"unsupported model bundle version {version}")
    sections = {}
    while not r.done():
        (name_len,) = r.unpack("<B")
        name = r.take(name_len).decode("ascii", "replace")
        (size,) = r.unpack("<Q")
        sections[name] = r.take(size)
    missing = {"PCA_IMG", "PCA_AUD", "SVM", "CONFIG"} - sections.keys()
    if missing:
        raise MediaFormatError(f"model bundle lacks sections {sorted(missing)}")
    try:
        config = json.loads(sections["CONFIG"].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MediaFormatError(f"model bundle CONFIG is not JSON: {exc}") from None
    return ModelBundle(
        _unpack_pca(sections["PCA_IMG"]), _unpack_pca(sections["PCA_AUD"]), _unpack_svm(sections["SVM"]), config
    )
