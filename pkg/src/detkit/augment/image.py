"""Raster helpers shared by the augmentation ops.

Images are plain ``numpy.ndarray`` objects of shape ``(H, W, 3)`` and dtype
``uint8``. Photometric math runs on a float64 view in ``[0, 255]`` and is
quantized back with round-half-up at the end of each op.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


class ImageError(ValueError):
    """Raised for rasters that do not satisfy the ImageBuffer invariants."""


def check_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray):
        raise ImageError(f"expected numpy array, got {type(img).__name__}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError(f"empty image {img.shape}")
    if img.dtype != np.uint8:
        raise ImageError(f"expected uint8 samples, got {img.dtype}")
    return img


def to_float(img: np.ndarray) -> np.ndarray:
    return check_image(img).astype(np.float64)


def quantize(values: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round half up to uint8."""
    return np.floor(np.clip(values, 0.0, 255.0) + 0.5).astype(np.uint8)


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_png(path: str | Path, img: np.ndarray) -> None:
    Image.fromarray(check_image(img)).save(path, format="PNG")


def image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixels."""
    with Image.open(path) as im:
        return im.size
