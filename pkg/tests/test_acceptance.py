"""Acceptance criteria, each checked at its stated tolerance."""
import itertools
import json
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from detkit.augment import (
    adjust_brightness,
    adjust_exposure,
    crop_fraction,
    crop_transform,
    flip,
    flip_transform,
    grayscale,
    rotate,
    rotate_transform,
    transform_boxes,
)
from detkit.boxes import NormalizedBox
from detkit.cli import main
from detkit.dataset import FrameManifest
from detkit.metrics import (
    Detection,
    GroundTruth,
    average_precision,
    build_confusion_matrix,
    evaluate,
    f1_score,
    iou,
    match_detections,
    pr_points,
    read_confusion_csv,
    read_curve_csv,
)
from detkit.metrics.epochs import EpochMetrics
from detkit.nettopo import build_table1_graph, count_parameters, fusion_error, propagate_shapes, random_repconv
from detkit.trainmath import HyperParams, quadratic_descent, run_training_log
from detkit.trainmath import AdamWState, ParamGroup, adamw_step

from corpus import SPEC_FULL, make_corpus, random_instance, synthetic_detections, tree_bytes, write_dets
from oracles import ap_by_envelope, greedy_by_enumeration, hull_of_mask, rasterize_box

TESTS = Path(__file__).parent

C1 = "[1] augmentation operation suite"
C2 = "[2] box-transform raster oracle"
C3 = "[3] augment determinism"
C4 = "[4] metrics oracle equivalence"
C5 = "[5] report-semantics fixtures"
C6 = "[6] topology shapes and parameters"
C7 = "[7] RepConv fusion"
C8 = "[8] AdamW closed form and descent"
C9 = "[9] end-to-end smoke"


# [1]

@pytest.mark.acceptance(C1)
def test_augmentation_suite_passes_under_30s():
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(TESTS / "test_augment.py")],
        capture_output=True, text=True, cwd=TESTS.parent,
    )
    elapsed = time.perf_counter() - start
    print(proc.stdout.strip().splitlines()[-1], f"({elapsed:.1f} s)")
    assert proc.returncode == 0, proc.stdout[-3000:]
    assert elapsed < 30.0


@pytest.mark.acceptance(C1)
def test_cited_direct_evaluations():
    px = np.array([[[100, 150, 200]]], dtype=np.uint8)
    assert grayscale(px)[0, 0].tolist() == [141, 141, 141]
    assert (adjust_brightness(np.full((2, 2, 3), 240, np.uint8), 0.15) == 255).all()
    hundred = np.full((2, 2, 3), 100, np.uint8)
    assert (adjust_exposure(hundred, 10) == 110).all()
    assert (adjust_exposure(hundred, -10) == 90).all()


# [2]

def _random_box(rng):
    w, h = rng.uniform(0.05, 0.6, 2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return NormalizedBox(0, cx, cy, w, h)


def _mask_image(mask):
    return np.repeat((mask * 255).astype(np.uint8)[..., None], 3, axis=2)


@pytest.mark.acceptance(C2)
@pytest.mark.parametrize("op", ["flip_h", "flip_v", "rotate90", "rotate-90", "crop"])
def test_box_oracle_200_boxes(op):
    size = 64
    rng = np.random.default_rng({"flip_h": 1, "flip_v": 2, "rotate90": 3, "rotate-90": 4, "crop": 5}[op])
    worst = 0.0
    for _ in range(200):
        box = _random_box(rng)
        mask = rasterize_box(box, size, size)
        if op.startswith("flip"):
            axis = "horizontal" if op == "flip_h" else "vertical"
            t = flip_transform(size, size, axis)
            moved = flip(_mask_image(mask), axis)
        elif op.startswith("rotate"):
            deg = 90.0 if op == "rotate90" else -90.0
            t = rotate_transform(size, size, deg)
            moved = rotate(_mask_image(mask), deg)
        else:
            p = float(rng.uniform(0.05, 0.25))
            t = crop_transform(size, size, p)
            moved = crop_fraction(_mask_image(mask), p)
        moved_mask = moved[..., 0] > 127
        hull = hull_of_mask(moved_mask)
        got = transform_boxes([box], t)
        ow, oh = t.out_size
        if not got:
            assert hull is None or moved_mask.sum() < 0.2 * mask.sum()
            continue
        x1, y1, x2, y2 = got[0].corners()
        if hull is None:
            # sliver narrower than a pixel covers no pixel center
            assert min((x2 - x1) * ow, (y2 - y1) * oh) <= 1.0
            continue
        err = np.abs(np.array([x1 * ow, y1 * oh, x2 * ow, y2 * oh]) - np.array(hull, float)).max()
        worst = max(worst, err)
        assert err <= 1.0, (op, box, hull)
    print(f"{op}: worst edge error {worst:.3f} px")


# [3]

@pytest.mark.acceptance(C3)
def test_cmd_augment_bit_identical(tmp_path):
    manifest = make_corpus(tmp_path / "src", n=10, size=(48, 40), seed=21)
    spec = tmp_path / "spec.ini"
    spec.write_text(SPEC_FULL)
    trees = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / name
        assert main(["augment", str(manifest), "--spec", str(spec), "--out", str(out),
                     "--seed", "1234", "--workers", workers]) == 0
        trees.append(tree_bytes(out))
    assert trees[0] == trees[1] == trees[2]
    assert len(trees[0]) == 10 * 2 + 2


# [4]

@pytest.mark.acceptance(C4)
def test_ap_against_envelope_500_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(500):
        dets, gts = random_instance(rng, max_dets=20, max_gts=10)
        for c in sorted({g.class_id for g in gts}):
            pts = pr_points(c, dets, gts)
            ap = average_precision(pts.recall, pts.precision)
            worst = max(worst, abs(ap - ap_by_envelope(pts.points())))
    print(f"max |AP - envelope| = {worst:.2e}")
    assert worst <= 1e-6


@pytest.mark.acceptance(C4)
def test_greedy_against_exhaustive_on_full_grid():
    cells = [(a / 4, 0.0, b / 4, 1.0) for a in range(4) for b in range(a + 1, 4)]
    checked = 0
    for nd in range(4):
        for ng in range(4):
            for dboxes in itertools.product(cells, repeat=nd):
                for gboxes in itertools.product(cells, repeat=ng):
                    gts = [GroundTruth("a", 0, b) for b in gboxes]
                    patterns = [[0.9 - 0.1 * i for i in range(nd)]]
                    if nd > 1:
                        patterns.append([0.5] * nd)
                    for confs in patterns:
                        dets = [Detection("a", 0, b, c) for b, c in zip(dboxes, confs)]
                        assert match_detections(dets, gts, 0.5).det_to_gt == greedy_by_enumeration(dets, gts, iou, 0.5)
                        checked += 1
    print(f"{checked} grid instances")
    assert checked == sum(
        (6 ** nd) * (6 ** ng) * (2 if nd > 1 else 1) for nd in range(4) for ng in range(4)
    )


@pytest.mark.acceptance(C4)
def test_confusion_identities_1000_instances():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        dets, gts = random_instance(rng, classes=3)
        cm = build_confusion_matrix(dets, gts, 3, conf_thresh=0.25, iou_thresh=0.5)
        kept = sum(d.confidence >= 0.25 for d in dets)
        assert cm.matched + cm.background_fn == len(gts)
        assert cm.matched + cm.background_fp == kept


# [5]

@pytest.mark.acceptance(C5)
def test_f1_fixture():
    assert abs(f1_score(0.9063, 0.7503) - 0.8210) <= 1e-4


@pytest.mark.acceptance(C5)
def test_forty_epoch_series_best_is_31(tmp_path):
    rng = np.random.default_rng(31)
    scores = np.round(rng.uniform(0.40, 0.78, 40), 6)
    scores[30] = 0.7879
    series = [EpochMetrics(e, 0.85, 0.7, round(min(1.0, s + 0.15), 6), float(s))
              for e, s in zip(range(1, 41), scores)]
    log = run_training_log(series, tmp_path / "epochs.csv")
    assert log.best_epoch == 31
    assert max(m.map50_95 for m in log.series) == 0.7879


@pytest.mark.acceptance(C5)
def test_summary_renders_max_f1_line():
    gts = [GroundTruth("a", 0, (0.1, 0.1, 0.4, 0.4)), GroundTruth("a", 1, (0.5, 0.5, 0.9, 0.9))]
    dets = [Detection("a", 0, (0.1, 0.1, 0.4, 0.4), 0.8), Detection("a", 1, (0.5, 0.5, 0.8, 0.9), 0.102),
            Detection("a", 1, (0.0, 0.6, 0.2, 0.8), 0.05)]
    text = evaluate(dets, gts, 2).summary_text(["x", "y"])
    line = next(ln for ln in text.splitlines() if ln.startswith("max F1 at threshold"))
    assert re.fullmatch(r"max F1 at threshold: all classes \d\.\d{2} at \d\.\d{3}", line), line
    print(line)


# [6]

@pytest.mark.acceptance(C6)
def test_reference_shapes_and_conv6_flag():
    g = build_table1_graph()
    rep = propagate_shapes(g)
    table = {
        "Conv0": 320, "Conv1": 160, "Conv2": 80, "Conv3": 40, "Conv4": 20, "Conv5": 10,
        "ELAN0": 40, "ELAN1": 20, "ELAN2": 10, "SPPCSPC": 10,
    }
    for name, s in table.items():
        assert rep.shapes[name].spatial == (s, s), name
    flagged = {d.layer: d for d in rep.discrepancies}
    assert set(flagged) == {"Conv6"}
    assert flagged["Conv6"].computed == (10, 10) and flagged["Conv6"].table == (20, 20)


@pytest.mark.acceptance(C6)
def test_parameter_counts_three_layers():
    p = count_parameters(build_table1_graph()).per_node
    assert p["Conv0"] == 3 * 3 * 3 * 32 + 32 == 896
    assert p["Conv1"] == 3 * 3 * 32 * 64 + 64 == 18496
    assert p["Conv6"] == 1 * 1 * 1024 * 512 + 512 == 524800


# [7]

@pytest.mark.acceptance(C7)
def test_repconv_1000_draws_under_10s():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        c = int(rng.integers(1, 5))
        w3, w1 = random_repconv(rng, c)
        x = rng.normal(size=(c, 8, 8))
        worst = max(worst, fusion_error(x, w3, w1, identity=bool(i % 2)))
    elapsed = time.perf_counter() - start
    print(f"max abs error {worst:.2e} in {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 10.0


# [8]

@pytest.mark.acceptance(C8)
def test_adamw_first_step_examples():
    hp = HyperParams()
    for decay, expect in ((False, 0.999), (True, 0.9989995)):
        out, _ = adamw_step({"p": np.array(1.0)}, {"p": np.array(1.0)}, AdamWState(), hp,
                            [ParamGroup(("p",), decay)])
        assert abs(float(out["p"]) - expect) <= 1e-9


@pytest.mark.acceptance(C8)
def test_adamw_quadratic_monotone_100_steps():
    xs = np.abs(np.array(quadratic_descent(1.0, 100)))
    assert np.all(np.diff(xs[1:]) < 0)


# [9]

@pytest.mark.acceptance(C9)
def test_end_to_end_smoke(tmp_path, capsys):
    start = time.perf_counter()
    src = make_corpus(tmp_path / "corpus", n=20, size=(96, 72), seed=9)
    assert main(["dataset", "validate", str(src)]) == 0
    spec = tmp_path / "spec.ini"
    spec.write_text(SPEC_FULL)
    aug = tmp_path / "aug"
    assert main(["augment", str(src), "--spec", str(spec), "--out", str(aug), "--seed", "5"]) == 0
    manifest = FrameManifest.load(aug / "manifest.json")
    assert len(manifest) == 20
    assert main(["dataset", "validate", str(aug / "manifest.json")]) == 0

    dets = write_dets(tmp_path / "dets.txt", synthetic_detections(manifest, np.random.default_rng(3)))
    ev = tmp_path / "eval"
    assert main(["eval", str(dets), str(aug / "manifest.json"), "--out", str(ev), "--seed", "5"]) == 0
    for name in ("f1_curve", "precision_curve", "recall_curve", "pr_curve"):
        curves = read_curve_csv((ev / f"{name}.csv").read_text())
        assert "all" in curves
    names, counts = read_confusion_csv((ev / "confusion_matrix.csv").read_text())
    assert names[-1] == "background"
    _, norm = read_confusion_csv((ev / "confusion_matrix_normalized.csv").read_text())
    cols = norm.sum(axis=0)
    assert np.all((np.abs(cols - 1) < 1e-5) | (cols == 0))
    summary = json.loads((ev / "summary.json").read_text())
    assert 0 <= summary["map50_95"] <= summary["map50"] <= 1
    assert main(["dataset", "stats", str(aug / "manifest.json"), "--out", str(ev / "stats.csv")]) == 0
    assert (ev / "stats.csv").read_text().startswith("section,key,count")

    # failure paths
    (src.parent / "labels" / "frame_0003.txt").unlink()
    assert main(["augment", str(src), "--spec", str(spec), "--out", str(tmp_path / "bad")]) == 2
    assert main(["eval", str(dets), str(aug / "manifest.json")]) == 1
    elapsed = time.perf_counter() - start
    print(f"end-to-end {elapsed:.1f} s")
    assert elapsed < 120.0
