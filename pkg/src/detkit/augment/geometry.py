"""Geometric augmentations: flip, crop, rotation and shear.

Every op has a matching :class:`GeometricTransform` builder so that boxes can
be carried through the exact same mapping as the pixels. Matrices map
*source* pixel indices to *destination* pixel indices (x = column, y = row).
Box math happens in continuous coordinates where pixel ``i`` spans
``[i, i + 1)``; :meth:`GeometricTransform.continuous` does the half-pixel
conversion.

Positive rotation angles turn the picture clockwise as displayed (y axis
pointing down).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from ..boxes import NormalizedBox
from .image import ImageError, check_image, quantize

Axis = Literal["horizontal", "vertical"]

MIN_BOX_RETAINED = 0.10
_SNAP = 1e-12


def _check_axis(axis: str) -> None:
    if axis not in ("horizontal", "vertical"):
        raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


@dataclass(frozen=True)
class GeometricTransform:
    """Affine map in pixel-index coordinates plus the raster sizes it joins."""

    matrix: np.ndarray
    in_size: tuple[int, int]  # (width, height)
    out_size: tuple[int, int]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"matrix must be 3x3, got {m.shape}")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("transform matrix is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, width: int, height: int) -> GeometricTransform:
        return cls(np.eye(3), (width, height), (width, height))

    def then(self, other: GeometricTransform) -> GeometricTransform:
        """Apply ``self`` first, then ``other``."""
        if other.in_size != self.out_size:
            raise ValueError(f"size mismatch: {self.out_size} feeds {other.in_size}")
        return GeometricTransform(other.matrix @ self.matrix, self.in_size, other.out_size)

    def continuous(self) -> np.ndarray:
        shift = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5], [0.0, 0.0, 1.0]])
        unshift = np.array([[1.0, 0.0, -0.5], [0.0, 1.0, -0.5], [0.0, 0.0, 1.0]])
        return shift @ self.matrix @ unshift

    def is_identity(self) -> bool:
        return self.in_size == self.out_size and np.array_equal(self.matrix, np.eye(3))


def flip_transform(width: int, height: int, axis: Axis) -> GeometricTransform:
    _check_axis(axis)
    if axis == "horizontal":
        m = [[-1.0, 0.0, width - 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    else:
        m = [[1.0, 0.0, 0.0], [0.0, -1.0, height - 1.0], [0.0, 0.0, 1.0]]
    return GeometricTransform(np.array(m), (width, height), (width, height))


def crop_window(width: int, height: int, per_side: float) -> tuple[int, int, int, int]:
    """Retained window ``(x0, y0, x1, y1)``, half-open, for a per-side crop fraction."""
    if not 0.0 <= per_side < 0.5:
        raise ValueError(f"crop per_side must be in [0, 0.5), got {per_side}")
    # the epsilon keeps e.g. 0.3 * 10 from ceiling to 4
    dx = math.ceil(per_side * width - 1e-9)
    dy = math.ceil(per_side * height - 1e-9)
    x0, x1 = dx, width - dx
    y0, y1 = dy, height - dy
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise ImageError(
            f"crop of {per_side} per side leaves {x1 - x0}x{y1 - y0} from {width}x{height}"
        )
    return x0, y0, x1, y1


def crop_transform(width: int, height: int, per_side: float) -> GeometricTransform:
    x0, y0, x1, y1 = crop_window(width, height, per_side)
    m = np.array([[1.0, 0.0, -x0], [0.0, 1.0, -y0], [0.0, 0.0, 1.0]])
    return GeometricTransform(m, (width, height), (x1 - x0, y1 - y0))


def _snap(v: float) -> float:
    for target in (-1.0, 0.0, 1.0):
        if abs(v - target) < _SNAP:
            return target
    return v


def rotate_transform(width: int, height: int, theta_deg: float) -> GeometricTransform:
    if not math.isfinite(theta_deg):
        raise ValueError(f"rotation angle must be finite, got {theta_deg}")
    t = math.radians(theta_deg)
    c, s = _snap(math.cos(t)), _snap(math.sin(t))
    cx, cy = (width - 1) / 2, (height - 1) / 2
    m = np.array(
        [
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
            [0.0, 0.0, 1.0],
        ]
    )
    return GeometricTransform(m, (width, height), (width, height))


def shear_transform(width: int, height: int, axis: Axis, deg: float) -> GeometricTransform:
    """Shear anchored on the middle row (horizontal) or column (vertical).

    The anchor is pixel index ``H // 2`` (resp. ``W // 2``): a pixel on row
    ``y`` moves by ``(y - H // 2) * tan(deg)`` columns.
    """
    _check_axis(axis)
    if not abs(deg) < 45:
        raise ValueError(f"shear angle must satisfy |deg| < 45, got {deg}")
    k = _snap(math.tan(math.radians(deg)))
    if axis == "horizontal":
        cy = height // 2
        m = [[1.0, k, -k * cy], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    else:
        cx = width // 2
        m = [[1.0, 0.0, 0.0], [k, 1.0, -k * cx], [0.0, 0.0, 1.0]]
    return GeometricTransform(np.array(m), (width, height), (width, height))


def warp(img: np.ndarray, t: GeometricTransform) -> np.ndarray:
    """Inverse-map bilinear resampling; samples outside the source read as black."""
    check_image(img)
    h, w = img.shape[:2]
    if (w, h) != t.in_size:
        raise ValueError(f"image is {w}x{h}, transform expects {t.in_size}")
    if t.is_identity():
        return img.copy()
    ow, oh = t.out_size
    inv = np.linalg.inv(t.matrix)
    ys, xs = np.mgrid[0:oh, 0:ow].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return quantize(_bilinear(img.astype(np.float64), sx, sy))


def _bilinear(src: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = src.shape[:2]
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(sx.shape + (src.shape[2],), dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            weight = np.where(inside, wx * wy, 0.0)
            vals = src[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += weight[..., None] * vals
    return out


def flip(img: np.ndarray, axis: Axis) -> np.ndarray:
    check_image(img)
    _check_axis(axis)
    if axis == "horizontal":
        return img[:, ::-1].copy()
    return img[::-1, :].copy()


def crop_fraction(img: np.ndarray, per_side: float) -> np.ndarray:
    check_image(img)
    h, w = img.shape[:2]
    x0, y0, x1, y1 = crop_window(w, h, per_side)
    return img[y0:y1, x0:x1].copy()


def rotate(img: np.ndarray, theta_deg: float) -> np.ndarray:
    check_image(img)
    h, w = img.shape[:2]
    return warp(img, rotate_transform(w, h, theta_deg))


def shear(img: np.ndarray, axis: Axis, deg: float) -> np.ndarray:
    check_image(img)
    h, w = img.shape[:2]
    return warp(img, shear_transform(w, h, axis, deg))


def transform_boxes(
    boxes: Iterable[NormalizedBox], t: GeometricTransform
) -> list[NormalizedBox]:
    """Carry boxes through ``t``: map corners, take the hull, clamp, drop slivers.

    A box is dropped when its clamped hull keeps less than 10% of the
    unclamped hull area.
    """
    m = t.continuous()
    w_in, h_in = t.in_size
    w_out, h_out = t.out_size
    out = []
    for b in boxes:
        x1, y1, x2, y2 = b.corners()
        pts = np.array(
            [
                [x1 * w_in, x2 * w_in, x2 * w_in, x1 * w_in],
                [y1 * h_in, y1 * h_in, y2 * h_in, y2 * h_in],
                [1.0, 1.0, 1.0, 1.0],
            ]
        )
        mapped = m @ pts
        hx1, hx2 = mapped[0].min(), mapped[0].max()
        hy1, hy2 = mapped[1].min(), mapped[1].max()
        full = (hx2 - hx1) * (hy2 - hy1)
        cx1, cx2 = np.clip([hx1, hx2], 0.0, w_out)
        cy1, cy2 = np.clip([hy1, hy2], 0.0, h_out)
        kept = max(cx2 - cx1, 0.0) * max(cy2 - cy1, 0.0)
        if kept <= 0.0 or kept < MIN_BOX_RETAINED * full:
            continue
        out.append(
            NormalizedBox.from_corners(
                b.class_id,
                float(cx1 / w_out),
                float(cy1 / h_out),
                float(cx2 / w_out),
                float(cy2 / h_out),
            )
        )
    return out
