"""Seeded augmentation pipeline and its config file.

Every image gets its own random stream: ``sha256(f"{seed}:{image_id}")``,
first 8 bytes big-endian, seeds a ``numpy`` PCG64 generator. Results depend
only on ``(seed, image_id)``, so batches can run in any order or in parallel.

Scalar spec fields may be fixed values or ``(lo, hi)`` ranges; ranges are
drawn uniformly from the image's stream in field-declaration order before
any stochastic op runs.

Config grammar (``configparser`` INI, one ``[augment]`` section)::

    [augment]
    seed = 42
    flip_axis = horizontal        # horizontal | vertical | none
    rotation_deg = -15, 15        # "a, b" is a uniform range
    cutout_count = 3
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..boxes import NormalizedBox
from . import geometry as geo
from . import photometric as ph
from .image import check_image

Param = Union[float, tuple[float, float]]

_RANGED = (
    "crop_per_side",
    "rotation_deg",
    "shear_deg_h",
    "shear_deg_v",
    "hue_shift_deg",
    "saturation_factor",
    "brightness_delta",
    "exposure_percent",
    "blur_sigma",
    "noise_fraction",
    "cutout_area_fraction",
)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentSpec:
    flip_axis: Optional[str] = None
    crop_per_side: Param = 0.0
    rotation_deg: Param = 0.0
    grayscale_prob: float = 0.0
    shear_deg_h: Param = 0.0
    shear_deg_v: Param = 0.0
    hue_shift_deg: Param = 0.0
    saturation_factor: Param = 1.0
    brightness_delta: Param = 0.0
    exposure_percent: Param = 0.0
    blur_sigma: Param = 0.0
    noise_fraction: Param = 0.0
    cutout_count: int = 0
    cutout_area_fraction: Param = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.flip_axis not in (None, "horizontal", "vertical"):
            raise SpecError(f"flip_axis must be horizontal, vertical or None, got {self.flip_axis!r}")
        for name in _RANGED:
            v = getattr(self, name)
            if isinstance(v, (tuple, list)):
                if len(v) != 2 or v[0] > v[1]:
                    raise SpecError(f"{name}: range must be (lo, hi) with lo <= hi, got {v}")
                object.__setattr__(self, name, (float(v[0]), float(v[1])))
                for endpoint in v:
                    _check_value(name, float(endpoint))
            else:
                object.__setattr__(self, name, float(v))
                _check_value(name, float(v))
        _check_value("grayscale_prob", self.grayscale_prob)
        if self.cutout_count < 0:
            raise SpecError(f"cutout_count must be >= 0, got {self.cutout_count}")
        if not 0 <= self.seed < 2**64:
            raise SpecError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def resolve(self, rng: np.random.Generator) -> AugmentSpec:
        """Replace every range with a uniform draw, leaving a fixed-valued spec."""
        concrete = {}
        for name in _RANGED:
            v = getattr(self, name)
            if isinstance(v, tuple):
                concrete[name] = float(rng.uniform(v[0], v[1]))
        return dataclasses.replace(self, **concrete)

    def to_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in fields(self)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _check_value(name: str, v: float) -> None:
    unit = ("grayscale_prob", "noise_fraction", "cutout_area_fraction")
    if name in unit and not 0.0 <= v <= 1.0:
        raise SpecError(f"{name} must be in [0, 1], got {v}")
    if name == "crop_per_side" and not 0.0 <= v < 0.5:
        raise SpecError(f"crop_per_side must be in [0, 0.5), got {v}")
    if name in ("blur_sigma", "saturation_factor") and v < 0:
        raise SpecError(f"{name} must be >= 0, got {v}")
    if name in ("shear_deg_h", "shear_deg_v") and not abs(v) < 45:
        raise SpecError(f"{name} must satisfy |deg| < 45, got {v}")
    if name == "brightness_delta" and not -1.0 <= v <= 1.0:
        raise SpecError(f"brightness_delta must be in [-1, 1], got {v}")
    if name == "exposure_percent" and not v > -100:
        raise SpecError(f"exposure_percent must be > -100, got {v}")


# Ranges used for the kitchen knife-safety corpus.
KITCHEN_PRESET = AugmentSpec(
    flip_axis="horizontal",
    crop_per_side=(0.0, 0.2),
    rotation_deg=(-15.0, 15.0),
    grayscale_prob=0.15,
    shear_deg_h=(-10.0, 10.0),
    shear_deg_v=(-10.0, 10.0),
    hue_shift_deg=(-25.0, 25.0),
    saturation_factor=(0.75, 1.25),
    brightness_delta=(-0.15, 0.15),
    exposure_percent=(-10.0, 10.0),
    blur_sigma=(0.0, 2.5),
    noise_fraction=(0.0, 0.0101),
    cutout_count=3,
    cutout_area_fraction=0.10,
)


def substream(seed: int, image_id: str) -> tuple[str, np.random.Generator]:
    """Stream id (16 hex chars) and generator for one image."""
    digest = hashlib.sha256(f"{seed}:{image_id}".encode()).digest()[:8]
    return digest.hex(), np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def geometric_transform(width: int, height: int, spec: AugmentSpec) -> geo.GeometricTransform:
    """Composite flip -> crop -> rotate -> shear map for a fixed-valued spec."""
    t = geo.GeometricTransform.identity(width, height)
    for step in _geometric_steps(spec):
        w, h = t.out_size
        t = t.then(step(w, h))
    return t


def _geometric_steps(spec: AugmentSpec):
    if spec.flip_axis:
        yield lambda w, h: geo.flip_transform(w, h, spec.flip_axis)
    if spec.crop_per_side:
        yield lambda w, h: geo.crop_transform(w, h, spec.crop_per_side)
    if spec.rotation_deg:
        yield lambda w, h: geo.rotate_transform(w, h, spec.rotation_deg)
    if spec.shear_deg_h:
        yield lambda w, h: geo.shear_transform(w, h, "horizontal", spec.shear_deg_h)
    if spec.shear_deg_v:
        yield lambda w, h: geo.shear_transform(w, h, "vertical", spec.shear_deg_v)


def apply_pipeline(
    img: np.ndarray,
    boxes: Sequence[NormalizedBox],
    spec: AugmentSpec,
    image_id: str = "",
) -> tuple[np.ndarray, list[NormalizedBox]]:
    check_image(img)
    _, rng = substream(spec.seed, image_id)
    spec = spec.resolve(rng)
    h, w = img.shape[:2]

    # flip and crop are exact index remaps; rotation and shears share one resampling
    out = img
    if spec.flip_axis:
        out = geo.flip(out, spec.flip_axis)
    if spec.crop_per_side:
        out = geo.crop_fraction(out, spec.crop_per_side)
    oh, ow = out.shape[:2]
    resample = geometric_transform(ow, oh, dataclasses.replace(spec, flip_axis=None, crop_per_side=0.0))
    out = geo.warp(out, resample)

    total = geometric_transform(w, h, spec)
    new_boxes = list(boxes) if total.is_identity() else geo.transform_boxes(boxes, total)

    out = ph.maybe_grayscale(out, spec.grayscale_prob, rng)
    if spec.hue_shift_deg:
        out = ph.shift_hue(out, spec.hue_shift_deg)
    if spec.saturation_factor != 1.0:
        out = ph.adjust_saturation(out, spec.saturation_factor)
    if spec.brightness_delta:
        out = ph.adjust_brightness(out, spec.brightness_delta)
    if spec.exposure_percent:
        out = ph.adjust_exposure(out, spec.exposure_percent)
    if spec.blur_sigma:
        out = ph.gaussian_blur(out, spec.blur_sigma)
    out = ph.add_noise(out, spec.noise_fraction, rng)
    out = ph.cutout(out, spec.cutout_count, spec.cutout_area_fraction, rng)
    return out, new_boxes


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name == "flip_axis":
        return None if raw.lower() in ("", "none") else raw
    if name in ("seed", "cutout_count"):
        return int(raw)
    if "," in raw:
        lo, hi = (float(p) for p in raw.split(","))
        return (lo, hi)
    return float(raw)


def parse_spec(text: str) -> AugmentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"bad config: {exc}") from exc
    if "augment" not in cp:
        raise SpecError("config has no [augment] section")
    known = {f.name for f in fields(AugmentSpec)}
    values = {}
    for key, raw in cp["augment"].items():
        if key not in known:
            raise SpecError(f"unknown augment key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise SpecError(f"{key}: cannot parse {raw!r}") from exc
    return AugmentSpec(**values)


def load_spec(path: str | Path) -> AugmentSpec:
    return parse_spec(Path(path).read_text())


def dump_spec(spec: AugmentSpec) -> str:
    lines = ["[augment]"]
    for f in fields(spec):
        v = getattr(spec, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, tuple):
            v = f"{v[0]!r}, {v[1]!r}"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
