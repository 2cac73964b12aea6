import json
from pathlib import Path

import numpy as np
import pytest

from detkit.augment import KITCHEN_PRESET, AugmentSpec, load_spec
from detkit.cli import main
from detkit.dataset import DEFAULT_CLASSES, FrameManifest, read_labels
from detkit.metrics import (
    curve_to_csv,
    ground_truth_from_manifest,
    parse_detections,
    pr_curve,
    read_confusion_csv,
    read_curve_csv,
)
from detkit.nettopo import ConvKernel, conv2d_forward

from corpus import SPEC_FULL, SPEC_IDENTITY, make_corpus, synthetic_detections, tree_bytes, write_dets


@pytest.fixture()
def corpus(tmp_path):
    return make_corpus(tmp_path / "src", n=6, size=(40, 32), seed=5)


def spec_file(tmp_path, text, name="spec.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# exit codes

def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["eval", "a", "b", "--out", "o", "--format", "png"]) == 1
    assert main(["augment", "m"]) == 1
    assert main(["dataset", "split", "m", "--out", "x", "--ratios", "a,b"]) == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "augment" in capsys.readouterr().out


def test_workers_must_be_positive(corpus, tmp_path):
    assert main(["dataset", "validate", str(corpus), "--workers", "0"]) == 1


def test_missing_manifest_exit_2(tmp_path, capsys):
    assert main(["dataset", "validate", str(tmp_path / "absent.json")]) == 2


# augment

def test_identity_spec_copies_bytes(corpus, tmp_path):
    spec = spec_file(tmp_path, SPEC_IDENTITY)
    out = tmp_path / "out"
    assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(out), "--workers", "2"]) == 0
    src = tree_bytes(corpus.parent)
    dst = tree_bytes(out)
    for key in src:
        if key.startswith(("images/", "labels/")):
            assert dst[key] == src[key], key
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["seed"] == 3 and len(prov["images"]) == 6
    assert all(len(v["substream"]) == 16 for v in prov["images"].values())
    assert len(FrameManifest.load(out / "manifest.json")) == 6


def test_augment_deterministic_and_seed_override(corpus, tmp_path):
    spec = spec_file(tmp_path, SPEC_FULL)
    runs = []
    for i, workers in enumerate(("1", "3")):
        out = tmp_path / f"o{i}"
        assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(out), "--workers", workers]) == 0
        runs.append(tree_bytes(out))
    assert runs[0] == runs[1]
    out = tmp_path / "o_seed"
    assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(out), "--seed", "99"]) == 0
    other = tree_bytes(out)
    assert json.loads(other["provenance.json"])["seed"] == 99
    assert other["images/frame_0000.png"] != runs[0]["images/frame_0000.png"]


def test_augment_labels_valid(corpus, tmp_path):
    spec = spec_file(tmp_path, SPEC_FULL)
    out = tmp_path / "out"
    assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(out)]) == 0
    m = FrameManifest.load(out / "manifest.json")
    for e in m.entries:
        read_labels(m.path(e.label), 6)
    assert main(["dataset", "validate", str(out / "manifest.json")]) == 0


def test_missing_label_exit_2(corpus, tmp_path, capsys):
    (corpus.parent / "labels" / "frame_0002.txt").unlink()
    spec = spec_file(tmp_path, SPEC_IDENTITY)
    assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "labels/frame_0002.txt" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_spec_exit_2(corpus, tmp_path):
    spec = spec_file(tmp_path, "[augment]\nrotation = 4\n")
    assert main(["augment", str(corpus), "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert main(["augment", str(corpus), "--spec", str(tmp_path / "none.ini"), "--out", str(tmp_path / "o")]) == 2


# eval

def test_eval_perfect(corpus, tmp_path, capsys):
    m = FrameManifest.load(corpus)
    dets = write_dets(tmp_path / "dets.txt", synthetic_detections(m, None, perfect=True))
    out = tmp_path / "ev"
    assert main(["eval", str(dets), str(corpus), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["map50"] == 1.0
    text = capsys.readouterr().out
    assert "mAP50       1.000000" in text
    assert "max F1 at threshold: all classes 1.00 at" in text
    for name in ("f1_curve", "precision_curve", "recall_curve", "pr_curve", "confusion_matrix",
                 "confusion_matrix_normalized"):
        assert (out / f"{name}.csv").is_file() and (out / f"{name}.svg").is_file()
    assert (out / "f1_curve.svg").read_text().startswith("<svg")


def test_eval_csv_round_trip_and_oracle(corpus, tmp_path):
    m = FrameManifest.load(corpus)
    dets_list = synthetic_detections(m, np.random.default_rng(1))
    dets = write_dets(tmp_path / "dets.txt", dets_list)
    out = tmp_path / "ev"
    assert main(["eval", str(dets), str(corpus), "--out", str(out), "--format", "csv"]) == 0
    assert not list(out.glob("*.svg"))
    parsed = parse_detections(dets.read_text())
    gts = ground_truth_from_manifest(m)
    expect = curve_to_csv(pr_curve(parsed, gts), DEFAULT_CLASSES)
    assert (out / "pr_curve.csv").read_text() == expect
    curves = read_curve_csv((out / "f1_curve.csv").read_text())
    assert len(curves["all"][0]) == 1000
    names, counts = read_confusion_csv((out / "confusion_matrix.csv").read_text())
    assert names[-1] == "background" and counts.shape == (7, 7)
    assert counts[:, :6].sum() == len(gts)


def test_eval_empty_detections(corpus, tmp_path):
    dets = tmp_path / "dets.txt"
    dets.write_text("")
    out = tmp_path / "ev"
    assert main(["eval", str(dets), str(corpus), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["recall"] == 0.0 and s["precision"] == 1.0 and s["map50"] == 0.0


def test_eval_no_ground_truth_exit_2(tmp_path):
    corpus = make_corpus(tmp_path / "c", n=2, boxes_per_image=(0, 0))
    dets = tmp_path / "dets.txt"
    dets.write_text("")
    assert main(["eval", str(dets), str(corpus), "--out", str(tmp_path / "o")]) == 2


def test_eval_bad_detections_exit_2(corpus, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("frame_0000 0 0.1 0.1 0.2\n")
    assert main(["eval", str(bad), str(corpus), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("unknown 0 0.1 0.1 0.2 0.3 0.5\n")
    assert main(["eval", str(bad), str(corpus), "--out", str(tmp_path / "o")]) == 2


def test_eval_epochs_log(corpus, tmp_path):
    m = FrameManifest.load(corpus)
    dets = write_dets(tmp_path / "dets.txt", synthetic_detections(m, None, perfect=True))
    log = tmp_path / "log.csv"
    log.write_text("epoch,precision,recall,map50,map50_95\n1,0.5,0.5,0.5,0.3\n2,0.5,0.5,0.5,0.4\n3,0.5,0.5,0.5,0.35\n")
    out = tmp_path / "ev"
    assert main(["eval", str(dets), str(corpus), "--out", str(out), "--epochs", str(log)]) == 0
    assert json.loads((out / "summary.json").read_text())["best_epoch"] == 2


def test_eval_idempotent(corpus, tmp_path):
    m = FrameManifest.load(corpus)
    dets = write_dets(tmp_path / "dets.txt", synthetic_detections(m, np.random.default_rng(2)))
    for o in ("a", "b"):
        assert main(["eval", str(dets), str(corpus), "--out", str(tmp_path / o)]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


# topo

def test_topo_table(tmp_path, capsys):
    dot = tmp_path / "g.dot"
    assert main(["topo", "--dot", str(dot), "--out", str(tmp_path / "t")]) == 0
    text = capsys.readouterr().out
    conv0 = next(line for line in text.splitlines() if line.startswith("Conv0"))
    assert "320 × 320" in conv0
    assert "Conv6: computed 10 × 10, table lists 20 × 20" in text
    assert "parameters total:" in text
    assert dot.read_text().startswith("digraph")
    assert (tmp_path / "t" / "layer_table.txt").read_text() == text


def test_topo_scaled(capsys):
    assert main(["topo", "--width", "0.5", "--depth", "0.33"]) == 0
    conv0 = next(line for line in capsys.readouterr().out.splitlines() if line.startswith("Conv0"))
    assert " 16 " in conv0


# fuse

def test_fuse_random_self_check(tmp_path, capsys):
    out = tmp_path / "fused.npz"
    assert main(["fuse", "--random", "4", "--identity", "--seed", "3", "--out", str(out)]) == 0
    line = next(l for l in capsys.readouterr().out.splitlines() if "max abs error" in l)
    assert float(line.split()[-1]) <= 1e-6
    data = np.load(out)
    assert data["weight"].shape == (4, 4, 3, 3)


def test_fuse_from_file(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = tmp_path / "branches.npz"
    w3, b3 = rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2)
    w1, b1 = rng.normal(size=(2, 3, 1, 1)), rng.normal(size=2)
    np.savez(src, w3=w3, b3=b3, w1=w1, b1=b1)
    out = tmp_path / "fused.npz"
    assert main(["fuse", str(src), "--out", str(out)]) == 0
    data = np.load(out)
    x = rng.normal(size=(3, 6, 6))
    fused = ConvKernel(data["weight"], data["bias"], 1, 1)
    ref = conv2d_forward(x, ConvKernel(w3, b3, 1, 1)) + conv2d_forward(x, ConvKernel(w1, b1, 1, 0))
    assert np.max(np.abs(conv2d_forward(x, fused) - ref)) <= 1e-6


def test_fuse_errors(tmp_path):
    assert main(["fuse"]) == 1
    assert main(["fuse", str(tmp_path / "none.npz")]) == 2
    bad = tmp_path / "bad.npz"
    np.savez(bad, w3=np.zeros((2, 3, 3, 3)), b3=np.zeros(2))
    assert main(["fuse", str(bad)]) == 2
    mismatch = tmp_path / "mm.npz"
    np.savez(mismatch, w3=np.zeros((2, 3, 3, 3)), b3=np.zeros(2), w1=np.zeros((2, 3, 1, 1)), b1=np.zeros(2))
    assert main(["fuse", str(mismatch), "--identity"]) == 2


# dataset

def test_dataset_validate(corpus, capsys):
    assert main(["dataset", "validate", str(corpus)]) == 0
    (corpus.parent / "labels" / "frame_0001.txt").write_text("9 0.5 0.5 0.1 0.1\n")
    assert main(["dataset", "validate", str(corpus)]) == 2
    assert "labels/frame_0001.txt" in capsys.readouterr().err


def test_dataset_split(corpus, tmp_path, capsys):
    out = tmp_path / "elsewhere" / "split.json"
    assert main(["dataset", "split", str(corpus), "--ratios", "0.5,0.5", "--seed", "1", "--out", str(out)]) == 0
    m = FrameManifest.load(out)
    assert sorted(e.split for e in m.entries) == ["train"] * 3 + ["val"] * 3
    assert all(m.path(e.image).is_file() for e in m.entries)
    assert main(["dataset", "split", str(corpus), "--ratios", "0.5,0.6", "--out", str(out)]) == 2


def test_dataset_stats_empty(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    csv_out = tmp_path / "stats.csv"
    assert main(["dataset", "stats", str(empty), "--out", str(csv_out)]) == 0
    assert "total" in capsys.readouterr().out
    rows = csv_out.read_text().splitlines()
    assert rows[0] == "section,key,count"
    assert rows[-1] == "total,images,0"
    assert all(r.endswith(",0") for r in rows[1:])


def test_dataset_stats_counts(corpus, capsys):
    assert main(["dataset", "stats", str(corpus)]) == 0
    out = capsys.readouterr().out
    gts = ground_truth_from_manifest(FrameManifest.load(corpus))
    assert out.splitlines()[-1].split()[-1] == "6"
    counts = sum(int(l.split()[-1]) for l in out.splitlines() if l.startswith("class"))
    assert counts == len(gts)


def test_shipped_configs_parse():
    root = Path(__file__).parent.parent / "configs"
    assert load_spec(root / "kitchen.ini") == KITCHEN_PRESET
    assert load_spec(root / "identity.ini") == AugmentSpec(seed=0)
