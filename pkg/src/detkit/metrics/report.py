"""File formats and the one-call evaluation used by the CLI.

Detections file, one per line (whitespace separated)::

    <image_id> <class_id> <x1> <y1> <x2> <y2> <confidence>

Corners are normalized to the image size. Ground truth comes from YOLO label
files through a dataset manifest; ``image_id`` is the image file stem.

Curve CSV: header ``<x>,class,value`` where ``<x>`` is ``threshold`` for
confidence curves and ``recall`` for the PR curve; ``class`` is a class
name or ``all``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..dataset import FrameManifest, read_labels
from .ap import map_at, map_range
from .confusion import ConfusionMatrix, build_confusion_matrix
from .curves import Curve, confidence_curves, pr_curve, precision_recall_at
from .matching import Detection, GroundTruth, MetricsError


class DetectionFormatError(ValueError):
    pass


def parse_detections(text: str) -> list[Detection]:
    dets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 7:
            raise DetectionFormatError(f"line {lineno}: expected 7 fields, got {len(parts)}")
        try:
            box = tuple(float(p) for p in parts[2:6])
            dets.append(Detection(parts[0], int(parts[1]), box, float(parts[6])))
        except (ValueError, MetricsError) as exc:
            raise DetectionFormatError(f"line {lineno}: {exc}") from None
    return dets


def write_detections(dets: Sequence[Detection]) -> str:
    return "".join(
        f"{d.image_id} {d.class_id} {d.box[0]:.6f} {d.box[1]:.6f} {d.box[2]:.6f} "
        f"{d.box[3]:.6f} {d.confidence:.6f}\n"
        for d in dets
    )


def ground_truth_from_manifest(manifest: FrameManifest, num_classes: Optional[int] = None) -> list[GroundTruth]:
    gts = []
    for entry in manifest.entries:
        for r in read_labels(manifest.path(entry.label), num_classes):
            x1, y1, x2, y2 = r.corners()
            gts.append(GroundTruth(entry.image_id, r.class_id, (x1, y1, x2, y2)))
    return gts


def curve_to_csv(curve: Curve, class_names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    x_col = "recall" if curve.x_label == "Recall" else "threshold"
    w.writerow([x_col, "class", "value"])
    for c, ys in curve.per_class.items():
        for x, y in zip(curve.x, ys):
            w.writerow([f"{x:.6f}", class_names[c], f"{y:.6f}"])
    for x, y in zip(curve.x, curve.aggregate):
        w.writerow([f"{x:.6f}", "all", f"{y:.6f}"])
    return buf.getvalue()


def read_curve_csv(text: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Class name -> (x, value) arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][1:] != ["class", "value"]:
        raise ValueError("not a curve CSV")
    out: dict[str, tuple[list, list]] = {}
    for x, name, v in rows[1:]:
        xs, vs = out.setdefault(name, ([], []))
        xs.append(float(x))
        vs.append(float(v))
    return {k: (np.array(a), np.array(b)) for k, (a, b) in out.items()}


def confusion_to_csv(cm: ConfusionMatrix, class_names: Sequence[str], normalized: bool = False) -> str:
    names = list(class_names) + ["background"]
    data = cm.normalized() if normalized else cm.counts
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted\\true"] + names)
    for name, row in zip(names, data):
        w.writerow([name] + [f"{v:.6f}" if normalized else str(int(v)) for v in row])
    return buf.getvalue()


def read_confusion_csv(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    names = rows[0][1:]
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if data.shape != (len(names), len(names)):
        raise ValueError(f"confusion CSV is {data.shape}, expected square of {len(names)}")
    return names, data


def peak_label(value: float, threshold: float) -> str:
    """Legend-style peak marker, e.g. ``0.75 at 0.102``."""
    return f"{value:.2f} at {threshold:.3f}"


@dataclass
class Evaluation:
    precision: float
    recall: float
    map50: float
    map50_95: float
    ap50: dict[int, float]
    curves: dict[str, Curve]
    pr: Curve
    confusion: ConfusionMatrix
    conf_thresh: float
    iou_thresh: float

    def summary(self, class_names: Sequence[str], best_epoch: Optional[int] = None) -> dict:
        f1_val, f1_at = self.curves["f1"].best()
        p_val, p_at = self.curves["precision"].best()
        r_val, r_at = self.curves["recall"].best()
        out = {
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "map50": round(self.map50, 6),
            "map50_95": round(self.map50_95, 6),
            "conf_thresh": self.conf_thresh,
            "iou_thresh": self.iou_thresh,
            "ap50": {class_names[c]: round(v, 6) for c, v in self.ap50.items()},
            "max_f1": {"value": round(f1_val, 6), "threshold": round(f1_at, 6),
                       "label": f"all classes {peak_label(f1_val, f1_at)}"},
            "max_precision": {"value": round(p_val, 6), "threshold": round(p_at, 6),
                              "label": f"all classes {peak_label(p_val, p_at)}"},
            "max_recall": {"value": round(r_val, 6), "threshold": round(r_at, 6),
                           "label": f"all classes {peak_label(r_val, r_at)}"},
        }
        if best_epoch is not None:
            out["best_epoch"] = best_epoch
        return out

    def summary_text(self, class_names: Sequence[str], best_epoch: Optional[int] = None) -> str:
        s = self.summary(class_names, best_epoch)
        lines = [
            f"precision   {s['precision']:.6f}  (conf >= {self.conf_thresh})",
            f"recall      {s['recall']:.6f}",
            f"mAP50       {s['map50']:.6f}",
            f"mAP50-95    {s['map50_95']:.6f}",
            f"max F1 at threshold: {s['max_f1']['label']}",
            f"max precision at threshold: {s['max_precision']['label']}",
            f"max recall at threshold: {s['max_recall']['label']}",
        ]
        if best_epoch is not None:
            lines.append(f"best epoch  {best_epoch}")
        return "\n".join(lines) + "\n"


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    num_classes: int,
    conf_thresh: float = 0.25,
    iou_thresh: float = 0.5,
) -> Evaluation:
    ap = map_at(dets, gts, iou_thresh)
    precision, recall = precision_recall_at(dets, gts, conf_thresh, iou_thresh)
    return Evaluation(
        precision=precision,
        recall=recall,
        map50=ap.map,
        map50_95=map_range(dets, gts),
        ap50=ap.per_class,
        curves=confidence_curves(dets, gts, iou_thresh),
        pr=pr_curve(dets, gts, iou_thresh),
        confusion=build_confusion_matrix(dets, gts, num_classes, conf_thresh, iou_thresh),
        conf_thresh=conf_thresh,
        iou_thresh=iou_thresh,
    )


def dump_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=False) + "\n"
