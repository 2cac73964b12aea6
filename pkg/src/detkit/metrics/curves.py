"""Confidence-swept precision/recall/F1 curves and the interpolated PR curve.

At a threshold that keeps no detections of a class, that class's precision
is reported as 1.0 (the high-confidence limit) and its recall as 0. The
``all`` curve is the unweighted mean over classes that have ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ap import RECALL_GRID, PRPoints, average_precision, interpolated_precision, pr_points
from .matching import Detection, GroundTruth, MetricsError

GRID_POINTS = 1000


@dataclass
class Curve:
    name: str
    x_label: str
    y_label: str
    x: np.ndarray
    per_class: dict[int, np.ndarray]
    aggregate: np.ndarray
    notes: dict[int, float] = field(default_factory=dict)  # e.g. per-class AP

    def __post_init__(self) -> None:
        if self.x.size > 1 and not np.all(np.diff(self.x) > 0):
            raise ValueError(f"{self.name}: x must be strictly increasing")

    def best(self, class_id: int | None = None) -> tuple[float, float]:
        """``(max value, x at first occurrence)`` of a class curve or the aggregate."""
        y = self.aggregate if class_id is None else self.per_class[class_id]
        i = int(np.argmax(y))
        return float(y[i]), float(self.x[i])


def threshold_grid(points: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def _kept_counts(sweep: PRPoints, thresholds: np.ndarray) -> np.ndarray:
    # detections with confidence >= t form a prefix of the descending sweep
    asc = sweep.confidence[::-1]
    return asc.size - np.searchsorted(asc, thresholds, side="left")


def _prf_at(sweep: PRPoints, thresholds: np.ndarray):
    k = _kept_counts(sweep, thresholds)
    if sweep.tp.size:
        tp = np.where(k > 0, sweep.tp[np.maximum(k - 1, 0)], 0.0)
    else:
        tp = np.zeros(thresholds.shape)
    precision = np.where(k > 0, tp / np.maximum(k, 1), 1.0)
    recall = tp / sweep.n_gt
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return precision, recall, f1


def _sweeps(dets, gts, iou_thresh) -> dict[int, PRPoints]:
    classes = sorted({g.class_id for g in gts})
    if not classes:
        raise MetricsError("no ground truth: curves are undefined")
    return {c: pr_points(c, dets, gts, iou_thresh) for c in classes}


def confidence_curves(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thresh: float = 0.5,
    points: int = GRID_POINTS,
) -> dict[str, Curve]:
    """Precision-, recall- and F1-vs-confidence curves on a uniform threshold grid."""
    t = threshold_grid(points)
    sweeps = _sweeps(dets, gts, iou_thresh)
    parts: dict[str, dict[int, np.ndarray]] = {"precision": {}, "recall": {}, "f1": {}}
    for c, sweep in sweeps.items():
        p, r, f = _prf_at(sweep, t)
        parts["precision"][c], parts["recall"][c], parts["f1"][c] = p, r, f
    labels = {"precision": "Precision", "recall": "Recall", "f1": "F1"}
    return {
        key: Curve(
            name=f"{key}_confidence",
            x_label="Confidence",
            y_label=labels[key],
            x=t,
            per_class=vals,
            aggregate=np.mean(np.stack(list(vals.values())), axis=0),
        )
        for key, vals in parts.items()
    }


def pr_curve(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float = 0.5
) -> Curve:
    """Interpolated precision on the 101-point recall grid; ``notes`` holds per-class AP."""
    sweeps = _sweeps(dets, gts, iou_thresh)
    per_class = {c: interpolated_precision(s.recall, s.precision) for c, s in sweeps.items()}
    return Curve(
        name="precision_recall",
        x_label="Recall",
        y_label="Precision",
        x=RECALL_GRID.copy(),
        per_class=per_class,
        aggregate=np.mean(np.stack(list(per_class.values())), axis=0),
        notes={c: average_precision(s.recall, s.precision) for c, s in sweeps.items()},
    )


def precision_recall_at(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    conf_thresh: float = 0.25,
    iou_thresh: float = 0.5,
) -> tuple[float, float]:
    """Class-averaged (precision, recall) keeping detections with confidence >= ``conf_thresh``."""
    sweeps = _sweeps(dets, gts, iou_thresh)
    t = np.array([conf_thresh])
    prs = [_prf_at(s, t) for s in sweeps.values()]
    return (
        float(np.mean([p[0][0] for p in prs])),
        float(np.mean([p[1][0] for p in prs])),
    )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
