"""Precision/recall sweeps, 101-point interpolated AP, and mAP."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matching import Detection, GroundTruth, MetricsError, confidence_order, match_detections

# i / 100 rather than linspace so that recall k/n == i/100 compares exactly
RECALL_GRID = np.arange(101) / 100.0
IOU_RANGE = tuple((50 + 5 * i) / 100.0 for i in range(10))


@dataclass
class PRPoints:
    """Cumulative sweep for one class, one point per detection by falling confidence."""

    class_id: int
    n_gt: int
    confidence: np.ndarray
    tp: np.ndarray  # cumulative true positives
    fp: np.ndarray  # cumulative false positives

    @property
    def recall(self) -> np.ndarray:
        if self.n_gt == 0:
            return np.zeros(len(self.tp))
        return self.tp / self.n_gt

    @property
    def precision(self) -> np.ndarray:
        return self.tp / np.maximum(self.tp + self.fp, 1)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def pr_points(
    class_id: int,
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thresh: float = 0.5,
) -> PRPoints:
    cdets = [d for d in dets if d.class_id == class_id]
    cgts = [g for g in gts if g.class_id == class_id]
    match = match_detections(cdets, cgts, iou_thresh)
    order = confidence_order(cdets)
    hits = np.array([match.tp[i] for i in order], dtype=bool)
    return PRPoints(
        class_id=class_id,
        n_gt=len(cgts),
        confidence=np.array([cdets[i].confidence for i in order], dtype=np.float64),
        tp=np.cumsum(hits).astype(np.float64),
        fp=np.cumsum(~hits).astype(np.float64),
    )


def interpolated_precision(recall: np.ndarray, precision: np.ndarray) -> np.ndarray:
    """Precision envelope sampled on :data:`RECALL_GRID` (0 past the last recall)."""
    recall = np.asarray(recall, dtype=np.float64)
    precision = np.asarray(precision, dtype=np.float64)
    if recall.size == 0:
        return np.zeros_like(RECALL_GRID)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    out = np.zeros_like(RECALL_GRID)
    inside = idx < recall.size
    out[inside] = envelope[idx[inside]]
    return out


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """COCO-style 101-point AP.

    The precision curve is replaced by its non-increasing envelope, sampled
    at recall 0, 0.01, ..., 1.00 and averaged.
    """
    return float(interpolated_precision(recall, precision).mean())


@dataclass
class APResult:
    iou_thresh: float
    per_class: dict[int, float]

    @property
    def map(self) -> float:
        return float(np.mean(list(self.per_class.values())))


def _gt_classes(gts: Sequence[GroundTruth]) -> list[int]:
    classes = sorted({g.class_id for g in gts})
    if not classes:
        raise MetricsError("no ground truth: mAP is undefined")
    return classes


def map_at(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float = 0.5
) -> APResult:
    """Per-class AP at one IoU threshold; classes without ground truth are skipped."""
    per_class = {}
    for c in _gt_classes(gts):
        pts = pr_points(c, dets, gts, iou_thresh)
        per_class[c] = average_precision(pts.recall, pts.precision)
    return APResult(iou_thresh, per_class)


def map_range(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    thresholds: Sequence[float] = IOU_RANGE,
) -> float:
    """mAP averaged over IoU 0.50:0.05:0.95."""
    return float(np.mean([map_at(dets, gts, t).map for t in thresholds]))
