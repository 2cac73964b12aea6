"""YOLO-format corpus tooling: label files, manifests, splits and validation.

Label files hold one object per line, ``class cx cy w h``, with coordinates
as fractions of the image size. Manifests are JSON::

    {"resolution": [1920, 1080],
     "entries": [{"image": "images/f0001.png", "label": "labels/f0001.txt", "split": ""}]}

Paths are relative to the manifest's directory.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .augment.image import image_size
from .boxes import BoxError, NormalizedBox

LabelRecord = NormalizedBox

DEFAULT_CLASSES = (
    "cutting board",
    "hand",
    "vegetable",
    "knife",
    "hazard 1 (curl finger)",
    "hazard 2 (hand touching blade)",
)

SPLIT_NAMES = ("train", "val", "test")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class LabelError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ClassTaxonomy:
    names: tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate class names in {self.names}")
        if not self.names:
            raise ValueError("taxonomy needs at least one class")

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def load(cls, path: str | Path) -> ClassTaxonomy:
        names = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        return cls(tuple(names))

    def dump(self) -> str:
        return "".join(n + "\n" for n in self.names)


def parse_label_file(text: str, num_classes: Optional[int] = None) -> list[LabelRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise LabelError(lineno, f"expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise LabelError(lineno, f"cannot parse {line.strip()!r}") from None
        if not all(math.isfinite(v) for v in (cx, cy, w, h)):
            raise LabelError(lineno, "non-finite coordinate")
        if num_classes is not None and class_id >= num_classes:
            raise LabelError(lineno, f"class {class_id} outside taxonomy of {num_classes}")
        try:
            records.append(LabelRecord(class_id, cx, cy, w, h))
        except BoxError as exc:
            raise LabelError(lineno, str(exc)) from None
    return records


def write_label_file(records: Iterable[LabelRecord]) -> str:
    return "".join(
        f"{r.class_id} {r.cx:.6f} {r.cy:.6f} {r.w:.6f} {r.h:.6f}\n" for r in records
    )


def read_labels(path: str | Path, num_classes: Optional[int] = None) -> list[LabelRecord]:
    return parse_label_file(Path(path).read_text(), num_classes)


@dataclass(frozen=True)
class FrameEntry:
    image: str
    label: str
    split: str = ""

    @property
    def image_id(self) -> str:
        return Path(self.image).stem


@dataclass
class FrameManifest:
    entries: list[FrameEntry] = field(default_factory=list)
    resolution: Optional[tuple[int, int]] = None
    root: Path = Path(".")

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            for p in (e.image, e.label):
                if p in seen:
                    raise ManifestError(f"duplicate path {p}")
                seen.add(p)

    def __len__(self) -> int:
        return len(self.entries)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_json(self) -> str:
        data = {
            "resolution": list(self.resolution) if self.resolution else None,
            "entries": [{"image": e.image, "label": e.label, "split": e.split} for e in self.entries],
        }
        return json.dumps(data, indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> FrameManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
            entries = [FrameEntry(e["image"], e["label"], e.get("split", "")) for e in data["entries"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: malformed manifest ({exc})") from exc
        res = data.get("resolution")
        return cls(entries, tuple(res) if res else None, path.parent)

    @classmethod
    def from_directory(cls, root: str | Path) -> FrameManifest:
        """Pair ``images/<stem>.*`` with ``labels/<stem>.txt`` under ``root``."""
        root = Path(root)
        images = sorted(
            p for p in (root / "images").glob("*") if p.suffix.lower() in IMAGE_SUFFIXES
        )
        entries = [
            FrameEntry(f"images/{p.name}", f"labels/{p.stem}.txt") for p in images
        ]
        return cls(entries, None, root)


def split_dataset(
    manifest: FrameManifest,
    ratios: Sequence[float],
    seed: int,
    names: Sequence[str] = SPLIT_NAMES,
) -> FrameManifest:
    """Shuffle by ``seed`` and tag entries.

    Every split after the first gets ``round(ratio * N)`` entries; the first
    (train) split takes the remainder.
    """
    if not manifest.entries:
        raise ManifestError("cannot split an empty manifest")
    if len(ratios) > len(names):
        raise ValueError(f"{len(ratios)} ratios but only {len(names)} split names")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {tuple(ratios)}")
    n = len(manifest.entries)
    sizes = [math.floor(r * n + 0.5) for r in ratios[1:]]
    sizes.insert(0, n - sum(sizes))
    if sizes[0] < 0:
        raise ValueError(f"ratios {tuple(ratios)} over-allocate {n} frames")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    tags = [""] * n
    start = 0
    for name, size in zip(names, sizes):
        for i in order[start : start + size]:
            tags[i] = name
        start += size
    entries = [replace(e, split=t) for e, t in zip(manifest.entries, tags)]
    return FrameManifest(entries, manifest.resolution, manifest.root)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass
class DatasetStats:
    class_counts: dict[str, int]
    split_counts: dict[str, int]
    resolutions: dict[tuple[int, int], int]
    images: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key", "count"])
        for k, v in self.class_counts.items():
            w.writerow(["class", k, v])
        for k, v in sorted(self.split_counts.items()):
            w.writerow(["split", k, v])
        for (rw, rh), v in sorted(self.resolutions.items()):
            w.writerow(["resolution", f"{rw}x{rh}", v])
        w.writerow(["total", "images", self.images])
        return buf.getvalue()

    def table(self) -> str:
        rows = [("class", n, c) for n, c in self.class_counts.items()]
        rows += [("split", s or "(untagged)", c) for s, c in sorted(self.split_counts.items())]
        rows += [("resolution", f"{w}x{h}", c) for (w, h), c in sorted(self.resolutions.items())]
        rows.append(("total", "images", self.images))
        width = max(len(str(r[1])) for r in rows)
        return "\n".join(f"{a:<11} {str(b):<{width}}  {c:>7}" for a, b, c in rows) + "\n"


@dataclass
class ValidationReport:
    stats: DatasetStats
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def _scan(manifest: FrameManifest, entry: FrameEntry, taxonomy: ClassTaxonomy):
    problems = []
    labels: list[LabelRecord] = []
    size = None
    img_path = manifest.path(entry.image)
    try:
        size = image_size(img_path)
        if manifest.resolution and tuple(size) != tuple(manifest.resolution):
            problems.append(
                Violation(entry.image, f"resolution {size[0]}x{size[1]} != expected "
                          f"{manifest.resolution[0]}x{manifest.resolution[1]}")
            )
    except FileNotFoundError:
        problems.append(Violation(entry.image, "image file missing"))
    except OSError as exc:
        problems.append(Violation(entry.image, f"unreadable image: {exc}"))
    try:
        labels = read_labels(manifest.path(entry.label), len(taxonomy))
    except FileNotFoundError:
        problems.append(Violation(entry.label, "label file missing"))
    except LabelError as exc:
        problems.append(Violation(entry.label, str(exc)))
    except OSError as exc:
        problems.append(Violation(entry.label, f"unreadable label: {exc}"))
    return size, labels, problems


def validate_dataset(
    manifest: FrameManifest,
    taxonomy: ClassTaxonomy = ClassTaxonomy(),
    workers: int = 1,
) -> ValidationReport:
    """Scan every entry, collecting all problems instead of stopping at the first."""
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda e: _scan(manifest, e, taxonomy), manifest.entries))
    classes: Counter = Counter()
    splits: Counter = Counter()
    sizes: Counter = Counter()
    violations = []
    for entry, (size, labels, problems) in zip(manifest.entries, results):
        splits[entry.split] += 1
        if size is not None:
            sizes[tuple(size)] += 1
        classes.update(r.class_id for r in labels)
        violations.extend(problems)
    violations.sort(key=lambda v: (v.path, v.message))
    stats = DatasetStats(
        class_counts={name: classes.get(i, 0) for i, name in enumerate(taxonomy.names)},
        split_counts=dict(splits),
        resolutions=dict(sizes),
        images=len(manifest.entries),
    )
    return ValidationReport(stats, violations)
