"""Stratified cross-validation, confusion-matrix metrics and ROC-AUC.

Metrics are reported in percent (accuracy, sensitivity, precision, F1)
plus AUC in [0, 1], with the malignant class as positive. Zero-denominator
metrics are undefined: they come back as NaN and are excluded from fold
averages rather than silently counted as zero.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import FeatureVector
from .ingest import MALIGNANT, NORMAL
from .seeding import derive_seed


class TooFewExamples(Exception):
    pass


class SingleClassScores(Exception):
    pass


class EmptyEvaluation(Exception):
    pass


@dataclass(frozen=True)
class LabeledExample:
    slide_id: str
    features: FeatureVector
    label: int


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    sensitivity: float
    precision: float
    f1: float
    auc: float = math.nan


@dataclass(frozen=True)
class FoldAssignment:
    folds: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class FoldResult:
    fold: int  # 1-based, matching the report rows
    confusion: ConfusionMatrix
    metrics: MetricSet


@dataclass(frozen=True)
class EvaluationReport:
    folds: tuple[FoldResult, ...]
    average: MetricSet
    fold_slide_ids: tuple[tuple[str, ...], ...]


def stratified_kfold(items: Sequence[tuple[str, int]], k: int,
                     seed: int) -> FoldAssignment:
    """Partition (slide_id, label) pairs into K label-stratified folds.

    Each label class is shuffled by the seed and dealt round-robin; the
    dealing pointer continues across classes so fold sizes stay within one
    of each other as well.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    ids = [sid for sid, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate slide ids")
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(k)]
    pointer = 0
    for label in sorted({lab for _, lab in items}, reverse=True):
        members = [sid for sid, lab in items if lab == label]
        if len(members) < k:
            raise TooFewExamples(
                f"label {label} has {len(members)} members, need >= {k}"
            )
        for idx in rng.permutation(len(members)):
            folds[pointer % k].append(members[idx])
            pointer += 1
    return FoldAssignment(tuple(tuple(f) for f in folds))


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    pos = y_true == MALIGNANT
    pred_pos = y_pred == MALIGNANT
    return ConfusionMatrix(
        tp=int(np.count_nonzero(pos & pred_pos)),
        tn=int(np.count_nonzero(~pos & ~pred_pos)),
        fp=int(np.count_nonzero(~pos & pred_pos)),
        fn=int(np.count_nonzero(pos & ~pred_pos)),
    )


def f1_score(precision: float, sensitivity: float) -> float:
    """Harmonic mean of precision and sensitivity (both in percent);
    NaN when either input is undefined or both are zero."""
    if math.isnan(precision) or math.isnan(sensitivity) \
            or precision + sensitivity == 0:
        return math.nan
    return 2.0 * precision * sensitivity / (precision + sensitivity)


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    """Accuracy, sensitivity, precision and F1 in percent (AUC left NaN)."""
    if cm.total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    accuracy = 100.0 * (cm.tp + cm.tn) / cm.total
    sensitivity = 100.0 * cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else math.nan
    precision = 100.0 * cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else math.nan
    return MetricSet(accuracy, sensitivity, precision,
                     f1_score(precision, sensitivity))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC: P(score_pos > score_neg) + 0.5 * P(tie).

    Uses doubled mid-ranks so every intermediate quantity is an integer;
    the result is exactly equal to exhaustive pairwise enumeration.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = labels == MALIGNANT
    n_pos = int(np.count_nonzero(pos))
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassScores("AUC needs scores from both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    rank2 = np.empty(scores.size, dtype=np.int64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        rank2[order[i:j + 1]] = i + j + 2  # doubled mid-rank of the tie group
        i = j + 1
    u2 = int(rank2[pos].sum()) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def mean_metrics(metric_sets: Sequence[MetricSet]) -> MetricSet:
    """Arithmetic mean per metric, skipping NaN (undefined) entries."""

    def _mean(values):
        defined = [v for v in values if not math.isnan(v)]
        return sum(defined) / len(defined) if defined else math.nan

    return MetricSet(
        accuracy=_mean([m.accuracy for m in metric_sets]),
        sensitivity=_mean([m.sensitivity for m in metric_sets]),
        precision=_mean([m.precision for m in metric_sets]),
        f1=_mean([m.f1 for m in metric_sets]),
        auc=_mean([m.auc for m in metric_sets]),
    )


def _run_fold(task):
    factory, train_fvs, train_labels, test_fvs, fold_seed = task
    clf = factory()
    clf.fit(train_fvs, train_labels, seed=fold_seed)
    return np.asarray(clf.predict_proba(test_fvs), dtype=float)


def cross_validate(examples: Sequence[LabeledExample],
                   factory: Callable[[], object],
                   k: int, seed: int, jobs: int = 1) -> EvaluationReport:
    """Train on K-1 folds, score the held-out fold, repeat for every fold.

    The factory builds a fresh classifier per fold; each fold trains with
    its own seed derived from the master seed, so results are identical
    whether folds run serially or in parallel.
    """
    assignment = stratified_kfold([(e.slide_id, e.label) for e in examples],
                                  k, seed)
    by_id = {e.slide_id: e for e in examples}
    tasks = []
    fold_labels = []
    for i, fold_ids in enumerate(assignment.folds):
        train = [by_id[s] for j, fold in enumerate(assignment.folds)
                 if j != i for s in fold]
        test = [by_id[s] for s in fold_ids]
        tasks.append((
            factory,
            [e.features for e in train],
            np.array([e.label for e in train], dtype=int),
            [e.features for e in test],
            derive_seed(seed, f"fold-{i}"),
        ))
        fold_labels.append(np.array([e.label for e in test], dtype=int))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_scores = list(pool.map(_run_fold, tasks))
    else:
        fold_scores = [_run_fold(t) for t in tasks]

    folds = []
    for i, (scores, y_true) in enumerate(zip(fold_scores, fold_labels)):
        y_pred = np.where(scores >= 0.5, MALIGNANT, NORMAL)
        cm = confusion_matrix(y_true, y_pred)
        metrics = compute_metrics(cm)
        metrics = MetricSet(metrics.accuracy, metrics.sensitivity,
                            metrics.precision, metrics.f1,
                            auc=roc_auc(scores, y_true))
        folds.append(FoldResult(i + 1, cm, metrics))
    average = mean_metrics([f.metrics for f in folds])
    return EvaluationReport(tuple(folds), average, assignment.folds)


def _fmt(value: float, digits: int = 2) -> str:
    return "" if math.isnan(value) else f"{value:.{digits}f}"


def _metrics_row(name: str, m: MetricSet) -> list[str]:
    return [name, _fmt(m.accuracy), _fmt(m.sensitivity), _fmt(m.precision),
            _fmt(m.f1), _fmt(m.auc)]


REPORT_HEADER = ("fold", "accuracy", "sensitivity", "precision", "f1", "auc")


def write_report_csv(report: EvaluationReport, path) -> None:
    """Two-decimal CSV with one row per fold plus the average row."""
    import csv

    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for fold in report.folds:
            writer.writerow(_metrics_row(str(fold.fold), fold.metrics))
        writer.writerow(_metrics_row("average", report.average))


def _metrics_doc(m: MetricSet) -> dict:
    return {
        name: (None if math.isnan(value) else value)
        for name, value in [
            ("accuracy", m.accuracy), ("sensitivity", m.sensitivity),
            ("precision", m.precision), ("f1", m.f1), ("auc", m.auc),
        ]
    }


def report_doc(report: EvaluationReport) -> dict:
    return {
        "folds": [
            {
                "fold": fold.fold,
                "confusion": {"tp": fold.confusion.tp, "tn": fold.confusion.tn,
                              "fp": fold.confusion.fp, "fn": fold.confusion.fn},
                "metrics": _metrics_doc(fold.metrics),
                "slide_ids": list(report.fold_slide_ids[fold.fold - 1]),
            }
            for fold in report.folds
        ],
        "average": _metrics_doc(report.average),
    }


def write_report_json(report: EvaluationReport, path) -> None:
    """Full-precision JSON report including the confusion matrices."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(report_doc(report), fh, indent=1, sort_keys=True)
        fh.write("\n")
