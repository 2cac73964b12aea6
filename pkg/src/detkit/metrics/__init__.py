"""Detection evaluation: IoU matching, PR sweeps, AP/mAP, confidence curves, confusion matrix."""
from .ap import (
    IOU_RANGE,
    RECALL_GRID,
    APResult,
    PRPoints,
    average_precision,
    interpolated_precision,
    map_at,
    map_range,
    pr_points,
)
from .confusion import ConfusionMatrix, build_confusion_matrix
from .curves import Curve, confidence_curves, f1_score, pr_curve, precision_recall_at, threshold_grid
from .epochs import EpochMetrics, select_best_epoch
from .matching import Detection, GroundTruth, MatchResult, MetricsError, iou, match_detections
from .report import (
    DetectionFormatError,
    Evaluation,
    confusion_to_csv,
    curve_to_csv,
    dump_summary,
    evaluate,
    peak_label,
    ground_truth_from_manifest,
    parse_detections,
    read_confusion_csv,
    read_curve_csv,
    write_detections,
)
