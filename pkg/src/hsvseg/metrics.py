"""Pixel-confusion metrics for single frames and distributional aggregation
for composite sequences."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .datamodel import AggregateStats, BinaryMask, MetricsReport

METRIC_NAMES = ("iou", "f1", "precision", "recall", "accuracy", "specificity")

FRAME_CSV_COLUMNS = ("frame_index", "tp", "fp", "fn", "tn",
                     "iou", "f1", "precision", "recall", "accuracy", "specificity")
AGGREGATE_CSV_COLUMNS = ("metric", "mean", "min", "max", "std", "n")


def confusion(pred: BinaryMask, gt: BinaryMask) -> tuple[int, int, int, int]:
    """Count pixels where (pred, gt) is (1,1), (1,0), (0,1), (0,0)."""
    if pred.labels.shape != gt.labels.shape:
        raise ValueError(
            f"prediction {pred.labels.shape} and ground truth {gt.labels.shape} "
            "dimensions must match")
    p = pred.labels.astype(bool)
    g = gt.labels.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return tp, fp, fn, tn


def _ratio(numerator: int, denominator: int, vacuously_perfect: bool) -> float:
    """Zero-denominator convention: 1.0 when the score is vacuously perfect
    (there was nothing to get wrong), 0.0 otherwise."""
    if denominator == 0:
        return 1.0 if vacuously_perfect else 0.0
    return numerator / denominator


def compute_metrics(tp: int, fp: int, fn: int, tn: int) -> MetricsReport:
    """Derive the seven scores from confusion counts.

    Conventions for empty masks: iou/f1 are 1.0 when tp+fp+fn == 0 (both
    masks empty); precision is 1.0 for an empty prediction only if nothing
    was missed, and symmetrically for recall; specificity is 1.0 when no
    background exists.
    """
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("confusion counts must be nonnegative")
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("cannot compute metrics over zero pixels")
    iou = _ratio(tp, tp + fp + fn, vacuously_perfect=True)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn, vacuously_perfect=True)
    precision = _ratio(tp, tp + fp, vacuously_perfect=fn == 0)
    recall = _ratio(tp, tp + fn, vacuously_perfect=fp == 0)
    accuracy = (tp + tn) / total
    specificity = _ratio(tn, tn + fp, vacuously_perfect=True)
    return MetricsReport(tp=tp, fp=fp, fn=fn, tn=tn, iou=iou, f1=f1,
                         precision=precision, recall=recall, accuracy=accuracy,
                         specificity=specificity, dice=f1)


def evaluate_masks(pred: BinaryMask, gt: BinaryMask) -> MetricsReport:
    return compute_metrics(*confusion(pred, gt))


def aggregate(reports: Sequence[MetricsReport], metric_name: str) -> AggregateStats:
    """Mean/min/max/population-std of one score across reports."""
    if len(reports) == 0:
        raise ValueError("cannot aggregate an empty report list")
    values = np.array([r.score(metric_name) for r in reports], dtype=np.float64)
    values.sort()  # fixed summation order: stats are permutation-invariant
    lo, hi = float(values.min()), float(values.max())
    # np.mean can exceed max by one ulp on constant input
    mean = min(max(float(values.mean()), lo), hi)
    return AggregateStats(metric_name=metric_name, mean=mean, min=lo, max=hi,
                          std=float(values.std()), n=len(reports))


def aggregate_all(reports: Sequence[MetricsReport]) -> dict[str, AggregateStats]:
    return {name: aggregate(reports, name) for name in METRIC_NAMES}


def pool_counts(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Metrics over confusion counts summed across reports (reported alongside
    per-frame aggregates for transparency)."""
    if len(reports) == 0:
        raise ValueError("cannot pool an empty report list")
    return compute_metrics(sum(r.tp for r in reports), sum(r.fp for r in reports),
                           sum(r.fn for r in reports), sum(r.tn for r in reports))


def write_frame_reports_csv(path: str | Path, reports: Sequence[MetricsReport],
                            frame_indices: Sequence[int] | None = None) -> None:
    if frame_indices is None:
        frame_indices = range(len(reports))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRAME_CSV_COLUMNS)
        for idx, r in zip(frame_indices, reports):
            writer.writerow([idx, r.tp, r.fp, r.fn, r.tn,
                             f"{r.iou:.6f}", f"{r.f1:.6f}", f"{r.precision:.6f}",
                             f"{r.recall:.6f}", f"{r.accuracy:.6f}", f"{r.specificity:.6f}"])


def read_frame_reports_csv(path: str | Path) -> list[tuple[int, MetricsReport]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            counts = {k: int(record[k]) for k in ("tp", "fp", "fn", "tn")}
            rows.append((int(record["frame_index"]), compute_metrics(**counts)))
    return rows


def write_aggregates_csv(path: str | Path, stats: Iterable[AggregateStats]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_CSV_COLUMNS)
        for s in stats:
            writer.writerow([s.metric_name, f"{s.mean:.6f}", f"{s.min:.6f}",
                             f"{s.max:.6f}", f"{s.std:.6f}", s.n])
