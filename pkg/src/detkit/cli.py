"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation failure.

Output directories are written only after all computation has finished, and
carry a ``provenance.json`` recording the seed and inputs. Nothing
time-dependent is written, so identical invocations give identical trees.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .augment import ImageError, SpecError, apply_pipeline, load_spec, read_png, substream
from .augment.image import write_png
from .dataset import (
    ClassTaxonomy,
    FrameEntry,
    FrameManifest,
    LabelError,
    ManifestError,
    read_labels,
    split_dataset,
    validate_dataset,
    write_label_file,
)
from .metrics import (
    DetectionFormatError,
    confusion_to_csv,
    curve_to_csv,
    dump_summary,
    evaluate,
    peak_label,
    ground_truth_from_manifest,
    parse_detections,
)
from .nettopo import (
    ConvKernel,
    build_table1_graph,
    compound_scale,
    count_parameters,
    discrepancy_text,
    fusion_error,
    layer_table,
    propagate_shapes,
    random_repconv,
    repconv_fuse,
    to_dot,
)
from .svg import heatmap, line_plot
from .trainmath import read_training_log

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_manifest(path: str) -> FrameManifest:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: no such manifest or directory")
    try:
        return FrameManifest.from_directory(p) if p.is_dir() else FrameManifest.load(p)
    except ManifestError as exc:
        raise DataError(str(exc)) from None


def load_taxonomy(path: Optional[str]) -> ClassTaxonomy:
    if path is None:
        return ClassTaxonomy()
    try:
        return ClassTaxonomy.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _report_violations(violations) -> None:
    for v in violations:
        print(f"{v.path}: {v.message}", file=sys.stderr)


# augment

@dataclass
class _Augmented:
    entry: FrameEntry
    stream: str
    image: bytes
    label: bytes


def _augment_one(manifest: FrameManifest, entry: FrameEntry, spec, num_classes: int) -> _Augmented:
    img_path = manifest.path(entry.image)
    label_path = manifest.path(entry.label)
    img = read_png(img_path)
    boxes = read_labels(label_path, num_classes)
    out, new_boxes = apply_pipeline(img, boxes, spec, entry.image_id)
    stream, _ = substream(spec.seed, entry.image_id)
    # unchanged pixels and boxes keep the source bytes
    if img_path.suffix.lower() == ".png" and np.array_equal(out, img):
        img_bytes = img_path.read_bytes()
    else:
        img_bytes = _png_bytes(out)
    label_bytes = label_path.read_bytes() if new_boxes == boxes else write_label_file(new_boxes).encode()
    return _Augmented(entry, stream, img_bytes, label_bytes)


def _png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_png(buf, img)
    return buf.getvalue()


def cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    taxonomy = load_taxonomy(args.classes)
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise DataError(f"{spec_path}: spec file not found")
    try:
        spec = load_spec(spec_path)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    except SpecError as exc:
        raise DataError(f"{spec_path}: {exc}") from None
    ids = [e.image_id for e in manifest.entries]
    if len(set(ids)) != len(ids):
        raise DataError("image file stems must be unique within a manifest")
    report = validate_dataset(manifest, taxonomy, args.workers)
    if not report.ok:
        _report_violations(report.violations)
        return EXIT_DATA

    def work(entry):
        return _augment_one(manifest, entry, spec, len(taxonomy))

    try:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(work, manifest.entries))
    except (ImageError, LabelError, OSError) as exc:
        raise DataError(str(exc)) from None

    out = Path(args.out)
    entries = []
    for r in results:
        name = Path(r.entry.image).stem
        img_rel = f"images/{name}.png"
        label_rel = f"labels/{name}.txt"
        _write(out / img_rel, r.image)
        _write(out / label_rel, r.label)
        entries.append(FrameEntry(img_rel, label_rel, r.entry.split))
    FrameManifest(entries, None, out).save(out / "manifest.json")
    provenance = {
        "command": "augment",
        "version": __version__,
        "seed": spec.seed,
        "spec_sha256": spec.digest(),
        "spec": spec.to_dict(),
        "images": {r.entry.image_id: {"source": r.entry.image, "substream": r.stream} for r in results},
    }
    _write(out / "provenance.json", _dump_json(provenance))
    print(f"augmented {len(results)} images -> {out}")
    return EXIT_OK


# eval

CURVE_FILES = {"f1": "f1_curve", "precision": "precision_curve", "recall": "recall_curve"}


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    taxonomy = load_taxonomy(args.classes)
    det_path = Path(args.detections)
    if not det_path.is_file():
        raise DataError(f"{det_path}: detections file not found")
    try:
        gts = ground_truth_from_manifest(manifest, len(taxonomy))
    except FileNotFoundError as exc:
        raise DataError(f"{exc.filename}: label file missing") from None
    except LabelError as exc:
        raise DataError(str(exc)) from None
    if not gts:
        raise DataError(f"{args.manifest}: no ground truth boxes")
    try:
        dets = parse_detections(det_path.read_text())
    except DetectionFormatError as exc:
        raise DataError(f"{det_path}: {exc}") from None
    known = {e.image_id for e in manifest.entries}
    for d in dets:
        if d.image_id not in known:
            raise DataError(f"{det_path}: detection for unknown image {d.image_id!r}")
        if d.class_id >= len(taxonomy):
            raise DataError(f"{det_path}: class {d.class_id} outside taxonomy of {len(taxonomy)}")
    best_epoch = None
    if args.epochs:
        try:
            best_epoch = read_training_log(Path(args.epochs).read_text()).best_epoch
        except (OSError, ValueError) as exc:
            raise DataError(f"{args.epochs}: {exc}") from None

    ev = evaluate(dets, gts, len(taxonomy), args.conf_thresh, args.iou_thresh)
    names = list(taxonomy.names)
    files: dict[str, object] = {}
    summary = ev.summary(names, best_epoch)
    summary["seed"] = args.seed
    files["summary.json"] = dump_summary(summary)
    files["summary.txt"] = ev.summary_text(names, best_epoch)
    want_csv = args.format in ("csv", "both")
    want_svg = args.format in ("svg", "both")
    plots = [(CURVE_FILES[k], ev.curves[k]) for k in ("f1", "precision", "recall")]
    plots.append(("pr_curve", ev.pr))
    cm_labels = names + ["background"]
    for stem, curve in plots:
        if want_csv:
            files[f"{stem}.csv"] = curve_to_csv(curve, names)
        if want_svg:
            series = [(names[c], y) for c, y in curve.per_class.items()]
            if curve.x_label == "Confidence":
                tag = f"all classes {peak_label(*curve.best())}"
            else:
                tag = f"all classes {ev.map50:.3f} mAP@{args.iou_thresh:g}"
            series.append((tag, curve.aggregate))
            files[f"{stem}.svg"] = line_plot(curve.x, series, curve.name.replace("_", " "),
                                             curve.x_label, curve.y_label, highlight=tag)
    if want_csv:
        files["confusion_matrix.csv"] = confusion_to_csv(ev.confusion, names)
        files["confusion_matrix_normalized.csv"] = confusion_to_csv(ev.confusion, names, normalized=True)
    if want_svg:
        files["confusion_matrix.svg"] = heatmap(ev.confusion.counts, cm_labels, "confusion matrix", "{:.0f}")
        files["confusion_matrix_normalized.svg"] = heatmap(ev.confusion.normalized(), cm_labels,
                                                           "confusion matrix (column normalized)")
    files["provenance.json"] = _dump_json({
        "command": "eval",
        "version": __version__,
        "seed": args.seed,
        "conf_thresh": args.conf_thresh,
        "iou_thresh": args.iou_thresh,
        "detections_sha256": _sha256(det_path),
        "images": len(manifest.entries),
        "ground_truth_boxes": len(gts),
        "detections": len(dets),
    })
    out = Path(args.out)
    for name, data in files.items():
        _write(out / name, data)
    sys.stdout.write(files["summary.txt"])
    return EXIT_OK


# topo

def cmd_topo(args) -> int:
    g = build_table1_graph(args.num_classes)
    if args.depth != 1.0 or args.width != 1.0:
        g = compound_scale(g, args.depth, args.width)
    report = propagate_shapes(g)
    params = count_parameters(g)
    text = layer_table(g, report) + "\n" + discrepancy_text(report)
    text += f"parameters total: {params.total}\n"
    sys.stdout.write(text)
    dot = to_dot(g, report)
    if args.dot:
        _write(Path(args.dot), dot)
    if args.out:
        out = Path(args.out)
        _write(out / "layer_table.txt", text)
        _write(out / "topology.dot", dot)
        _write(out / "provenance.json", _dump_json({
            "command": "topo", "version": __version__, "seed": args.seed,
            "depth": args.depth, "width": args.width, "num_classes": args.num_classes,
            "discrepancies": [str(d) for d in report.discrepancies],
        }))
    return EXIT_OK


# fuse

def _kernel(data, w: str, b: str, padding: int) -> ConvKernel:
    try:
        return ConvKernel(data[w], data[b], 1, padding)
    except KeyError as exc:
        raise DataError(f"missing array {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DataError(f"{w}: {exc}") from None


def cmd_fuse(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.random:
        w3, w1 = random_repconv(rng, args.random)
        identity = args.identity
    else:
        if not args.input:
            raise UsageError("fuse needs an input .npz or --random CHANNELS")
        path = Path(args.input)
        if not path.is_file():
            raise DataError(f"{path}: not found")
        try:
            data = dict(np.load(path))
        except (OSError, ValueError) as exc:
            raise DataError(f"{path}: {exc}") from None
        w3 = _kernel(data, "w3", "b3", 1)
        w1 = _kernel(data, "w1", "b1", 0)
        identity = args.identity or bool(data.get("identity", False))
    try:
        fused = repconv_fuse(w3, w1, identity)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    x = rng.normal(size=(w3.in_channels, 8, 8))
    err = fusion_error(x, w3, w1, identity)
    print(f"fused {w3.out_channels}x{w3.in_channels} kernel (identity={'on' if identity else 'off'})")
    print(f"self-check max abs error: {err:.3e}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "wb") as fh:
            np.savez(fh, weight=fused.weight, bias=fused.bias, identity=np.array(identity))
    return EXIT_OK if err <= 1e-6 else EXIT_DATA


# dataset

def cmd_dataset_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_dataset(manifest, load_taxonomy(args.classes), args.workers)
    sys.stdout.write(report.stats.table())
    _report_violations(report.violations)
    if report.ok:
        print(f"ok: {len(manifest)} frames")
        return EXIT_OK
    print(f"{len(report.violations)} violations", file=sys.stderr)
    return EXIT_DATA


def _ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None


def _relative(path: Path, base: Path) -> str:
    return Path(os.path.relpath(path.resolve(), base)).as_posix()


def cmd_dataset_split(args) -> int:
    manifest = load_manifest(args.manifest)
    try:
        split = split_dataset(manifest, args.ratios, args.seed)
    except (ManifestError, ValueError) as exc:
        raise DataError(str(exc)) from None
    out = Path(args.out)
    base = out.resolve().parent
    entries = [
        dataclasses.replace(e, image=_relative(manifest.path(e.image), base), label=_relative(manifest.path(e.label), base))
        for e in split.entries
    ]
    _write(out, FrameManifest(entries, split.resolution, base).to_json())
    counts = {}
    for e in split.entries:
        counts[e.split] = counts.get(e.split, 0) + 1
    print(" ".join(f"{k}={v}" for k, v in counts.items()) + f" (seed {args.seed})")
    return EXIT_OK


def cmd_dataset_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_dataset(manifest, load_taxonomy(args.classes), args.workers)
    sys.stdout.write(report.stats.table())
    if args.out:
        _write(Path(args.out), report.stats.to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    workers = min(8, os.cpu_count() or 1)
    p = _Parser(prog="detkit", description="Detection dataset, augmentation, metrics and topology tools.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("augment", help="augment a corpus with a seeded spec")
    a.add_argument("manifest", help="manifest JSON or directory with images/ and labels/")
    a.add_argument("--spec", required=True, help="augmentation INI file")
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int, default=None, help="overrides the spec's seed")
    a.add_argument("--classes", help="class names file, one per line")
    a.add_argument("--workers", type=int, default=workers)
    a.set_defaults(func=cmd_augment)

    e = sub.add_parser("eval", help="evaluate detections against a manifest")
    e.add_argument("detections")
    e.add_argument("manifest")
    e.add_argument("--out", required=True)
    e.add_argument("--iou-thresh", type=float, default=0.5)
    e.add_argument("--conf-thresh", type=float, default=0.25)
    e.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    e.add_argument("--seed", type=int, default=0, help="recorded in provenance")
    e.add_argument("--classes")
    e.add_argument("--epochs", help="epoch metrics CSV; adds the best epoch to the summary")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("topo", help="layer table, shape check and parameter counts")
    t.add_argument("--dot", help="write the expanded graph in DOT format")
    t.add_argument("--out")
    t.add_argument("--depth", type=float, default=1.0)
    t.add_argument("--width", type=float, default=1.0)
    t.add_argument("--num-classes", type=int, default=6)
    t.add_argument("--seed", type=int, default=0, help="recorded in provenance")
    t.set_defaults(func=cmd_topo)

    f = sub.add_parser("fuse", help="fuse RepConv branches from an .npz (w3, b3, w1, b1[, identity])")
    f.add_argument("input", nargs="?")
    f.add_argument("--out")
    f.add_argument("--identity", action="store_true")
    f.add_argument("--random", type=int, metavar="CHANNELS", help="fuse random branches instead of a file")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fuse)

    d = sub.add_parser("dataset", help="validate, split or summarize a corpus")
    dsub = d.add_subparsers(dest="action", required=True, parser_class=_Parser)
    v = dsub.add_parser("validate")
    v.add_argument("manifest")
    v.add_argument("--classes")
    v.add_argument("--workers", type=int, default=workers)
    v.set_defaults(func=cmd_dataset_validate)
    s = dsub.add_parser("split")
    s.add_argument("manifest")
    s.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="manifest JSON to write")
    s.set_defaults(func=cmd_dataset_split)
    st = dsub.add_parser("stats")
    st.add_argument("manifest")
    st.add_argument("--classes")
    st.add_argument("--workers", type=int, default=workers)
    st.add_argument("--out", help="write counts as CSV")
    st.set_defaults(func=cmd_dataset_stats)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        print("detkit: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"detkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"detkit: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
