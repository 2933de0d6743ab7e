"""Precision / recall / F1, stratified splits and k-fold cross-validation."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import TrainingError
from .media import Label

CLASSES = (Label.APPROPRIATE, Label.INAPPROPRIATE)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionCounts":
        """Counts with the other class taken as positive."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)


@dataclass(frozen=True)
class ClassReport:
    precision: float
    recall: float
    f1: float
    support: int


def confusion(truth: Sequence, pred: Sequence, positive) -> ConfusionCounts:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {len(truth)} labels vs {len(pred)} predictions")
    if truth.size == 0:
        raise ValueError("confusion needs at least one item")
    t = truth == positive
    p = pred == positive
    return ConfusionCounts(
        tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)), tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p))
    )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def precision_recall_f1(c: ConfusionCounts) -> ClassReport:
    """Undefined ratios (empty denominators) are reported as 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return ClassReport(precision, recall, f1_score(precision, recall), c.tp + c.fn)


def class_reports(truth, pred) -> dict[Label, ClassReport]:
    """One report per class, each class in turn taken as positive."""
    return {label: precision_recall_f1(confusion(truth, pred, int(label))) for label in CLASSES}


def _class_indices(labels, rng) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [rng.permutation(np.flatnonzero(labels == value)) for value in np.unique(labels)]


def kfold_split(n: int, k: int, labels=None, seed: int = 0) -> list[np.ndarray]:
    """Stratified folds: shuffle each class, deal its members round-robin.

    Each class continues dealing where the previous one stopped, so fold sizes
    differ by at most one and per-class counts by at most one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k ({k}) exceeds the number of items ({n})")
    if labels is None:
        labels = np.zeros(n)
    if len(labels) != n:
        raise ValueError("labels must have n entries")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for members in _class_indices(labels, rng):
        for idx in members:
            folds[cursor % k].append(int(idx))
            cursor += 1
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def stratified_holdout(labels, fraction: float = 0.1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, test) with ``fraction`` of each class held out."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for members in _class_indices(labels, rng):
        cut = int(round(len(members) * fraction))
        test.append(members[:cut])
        train.append(members[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float


@dataclass(frozen=True)
class CvClassSummary:
    precision: MeanStd
    recall: MeanStd
    f1: MeanStd
    support: int


@dataclass(frozen=True)
class CvReport:
    folds: int
    classes: dict  # Label -> CvClassSummary
    fold_reports: tuple  # per fold: dict Label -> ClassReport

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "classes": {label.text: asdict(summary) for label, summary in self.classes.items()},
            "fold_reports": [
                {label.text: asdict(report) for label, report in fold.items()} for fold in self.fold_reports
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _mean_std(values: list[float]) -> MeanStd:
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return MeanStd(statistics.fmean(values), std)


def summarize_folds(fold_reports: list[dict]) -> CvReport:
    classes = {}
    for label in CLASSES:
        reports = [fold[label] for fold in fold_reports]
        classes[label] = CvClassSummary(
            precision=_mean_std([r.precision for r in reports]),
            recall=_mean_std([r.recall for r in reports]),
            f1=_mean_std([r.f1 for r in reports]),
            support=sum(r.support for r in reports),
        )
    return CvReport(folds=len(fold_reports), classes=classes, fold_reports=tuple(fold_reports))


Trainer = Callable[[tuple, np.ndarray], Callable[[tuple], np.ndarray]]


def _take(features, idx):
    if isinstance(features, tuple):
        return tuple(np.asarray(f)[idx] for f in features)
    return np.asarray(features)[idx]


def cross_validate(features, labels, cfg=None, k: int = 20, seed: int = 0,
                   fit: Optional[Trainer] = None) -> CvReport:
    """k-fold cross-validation with the whole model refit inside every fold.

    ``features`` is an array or a tuple of arrays indexed by item (for the
    default trainer: pooled image and audio embeddings).  ``fit(train_features,
    train_labels)`` must return a predictor mapping features to labels; it
    defaults to fitting PCA + SVM via :func:`scenecensor.bundle.train_bundle`
    with ``cfg``.
    """
    labels = np.asarray(labels, dtype=int)
    if fit is None:
        from .bundle import ModelConfig, train_bundle

        model_cfg = cfg if cfg is not None else ModelConfig()

        def fit(train_features, train_labels):
            bundle = train_bundle(*train_features, train_labels, model_cfg)
            return lambda test_features: bundle.predict_pooled(*test_features)

    folds = kfold_split(len(labels), k, labels, seed)
    everything = np.arange(len(labels))
    fold_reports = []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(everything, test_idx)
        if len(np.unique(labels[train_idx])) < 2:
            raise TrainingError(f"degenerate fold composition: training portion of fold {i} has one class")
        predict = fit(_take(features, train_idx), labels[train_idx])
        pred = np.asarray(predict(_take(features, test_idx)), dtype=int)
        fold_reports.append(class_reports(labels[test_idx], pred))
    return summarize_folds(fold_reports)


def format_table(reports: dict, title: str = "") -> str:
    """Aligned text table of class reports or of a CV summary."""
    lines = [title] if title else []
    lines.append(f"{'':6}{'F1-score':>18}{'Precision':>18}{'Recall':>18}{'Support':>9}")
    names = {Label.APPROPRIATE: "Appr", Label.INAPPROPRIATE: "Inap"}
    for label in CLASSES:
        r = reports[label]
        if isinstance(r, CvClassSummary):
            cells = [f"{100 * m.mean:7.2f}% ±{100 * m.std:5.2f}" for m in (r.f1, r.precision, r.recall)]
        else:
            cells = [f"{100 * v:7.2f}%" for v in (r.f1, r.precision, r.recall)]
        lines.append(f"{names[label]:6}" + "".join(f"{c:>18}" for c in cells) + f"{r.support:>9}")
    return "\n".join(lines)
