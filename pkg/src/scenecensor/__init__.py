"""Detect inappropriate scenes in video and censor them.

A video is cut into short segments; each segment is classified from fused
image/audio embeddings by a PCA-whitened SVM, and flagged segments are
blurred and muted before the video is reassembled.
"""

from .bundle import ModelBundle, ModelConfig, dump_bundle, load_bundle, train_bundle
from .censor import CensorReport, Scene, blur_frame, censor_segment, emit_xml, gaussian_kernel, mute_audio, parse_xml
from .embeddings import fuse, synthetic_embedding
from .errors import CensorToolError, InputError
from .media import AudioTrack, Label, Segment, Verdict, VideoAsset, merge_segments, sample_frames, split_segments
from .media_io import read_wav, read_y4m, write_wav, write_y4m
from .metrics import class_reports, confusion, cross_validate, kfold_split, precision_recall_f1
from .pca import PcaModel, fit_pca
from .svm import KernelSpec, SvmModel, TrainConfig, qp_oracle, train_smo

__version__ = "0.1.0"
