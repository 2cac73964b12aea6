"""Detection/ground-truth records, IoU, and greedy confidence-ordered matching."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

Box = tuple[float, float, float, float]


class MetricsError(ValueError):
    pass


def _check_box(box: Box) -> Box:
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise MetricsError(f"degenerate box {box}; need x1 < x2 and y1 < y2")
    return (float(x1), float(y1), float(x2), float(y2))


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: Box

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", _check_box(self.box))


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: Box
    confidence: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "box", _check_box(self.box))
        if not 0.0 <= self.confidence <= 1.0:
            raise MetricsError(f"confidence {self.confidence} outside [0, 1]")


def iou(a: Box, b: Box) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


@dataclass
class MatchResult:
    """Outcome per detection (input order) and per ground truth (input order)."""

    tp: list[bool]
    det_to_gt: list[int]  # -1 when unmatched
    gt_matched: list[bool]


def confidence_order(dets: Sequence[Detection]) -> list[int]:
    """Indices by descending confidence; equal confidences keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float = 0.5
) -> MatchResult:
    """Greedy matching within each (image, class) group.

    Detections are visited by descending confidence. Each one claims the
    still-unmatched ground truth of its image and class with the highest
    IoU, provided that IoU is at least ``iou_thresh``. IoU ties go to the
    lower ground-truth index.
    """
    by_key: dict[tuple[str, int], list[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        by_key[(g.image_id, g.class_id)].append(j)
    taken = [False] * len(gts)
    det_to_gt = [-1] * len(dets)
    for i in confidence_order(dets):
        d = dets[i]
        best, best_iou = -1, -1.0
        for j in by_key.get((d.image_id, d.class_id), ()):
            if taken[j]:
                continue
            o = iou(d.box, gts[j].box)
            if o >= iou_thresh and o > best_iou:
                best, best_iou = j, o
        if best >= 0:
            taken[best] = True
            det_to_gt[i] = best
    return MatchResult([j >= 0 for j in det_to_gt], det_to_gt, taken)
