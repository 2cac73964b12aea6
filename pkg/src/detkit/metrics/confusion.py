"""Detection confusion matrix with a background row and column.

Rows are predicted classes, columns are true classes; index ``C`` is
background. A ground truth nobody claims lands in (background, true class);
a detection that claims nothing lands in (predicted class, background).
Matching ignores class and pairs boxes greedily by descending IoU within
each image.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matching import Detection, GroundTruth, MetricsError, iou


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C + 1, C + 1) int, [predicted, true]
    conf_thresh: float
    iou_thresh: float

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def background(self) -> int:
        return self.num_classes

    def normalized(self) -> np.ndarray:
        """Each column divided by its sum; empty columns stay zero."""
        col = self.counts.sum(axis=0, keepdims=True).astype(np.float64)
        return np.divide(self.counts, col, out=np.zeros(self.counts.shape), where=col > 0)

    @property
    def matched(self) -> int:
        c = self.num_classes
        return int(self.counts[:c, :c].sum())

    @property
    def background_fn(self) -> int:
        return int(self.counts[self.background, : self.num_classes].sum())

    @property
    def background_fp(self) -> int:
        return int(self.counts[: self.num_classes, self.background].sum())


def build_confusion_matrix(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    num_classes: int,
    conf_thresh: float = 0.25,
    iou_thresh: float = 0.5,
) -> ConfusionMatrix:
    for item in (*dets, *gts):
        if not 0 <= item.class_id < num_classes:
            raise MetricsError(f"class {item.class_id} outside 0..{num_classes - 1}")
    kept = [d for d in dets if d.confidence >= conf_thresh]
    bg = num_classes
    counts = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)

    dets_by_image: dict[str, list[int]] = defaultdict(list)
    gts_by_image: dict[str, list[int]] = defaultdict(list)
    for i, d in enumerate(kept):
        dets_by_image[d.image_id].append(i)
    for j, g in enumerate(gts):
        gts_by_image[g.image_id].append(j)

    det_used = [False] * len(kept)
    gt_used = [False] * len(gts)
    for image_id, di in dets_by_image.items():
        pairs = []
        for i in di:
            for j in gts_by_image.get(image_id, ()):
                o = iou(kept[i].box, gts[j].box)
                if o >= iou_thresh:
                    pairs.append((-o, i, j))
        pairs.sort()
        for _, i, j in pairs:
            if det_used[i] or gt_used[j]:
                continue
            det_used[i] = gt_used[j] = True
            counts[kept[i].class_id, gts[j].class_id] += 1

    for j, g in enumerate(gts):
        if not gt_used[j]:
            counts[bg, g.class_id] += 1
    for i, d in enumerate(kept):
        if not det_used[i]:
            counts[d.class_id, bg] += 1
    return ConfusionMatrix(counts, conf_thresh, iou_thresh)
