"""Photometric augmentations. None of these change the raster size."""
from __future__ import annotations

import math

import numpy as np

from .image import check_image, quantize, to_float

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def grayscale(img: np.ndarray) -> np.ndarray:
    f = to_float(img)
    r, g, b = LUMA_WEIGHTS
    y = r * f[..., 0] + g * f[..., 1] + b * f[..., 2]
    return np.repeat(quantize(y)[..., None], 3, axis=2)


def maybe_grayscale(img: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Grayscale with probability ``p``. Always consumes exactly one draw."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"grayscale probability must be in [0, 1], got {p}")
    hit = rng.random() < p
    return grayscale(img) if hit else check_image(img).copy()


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """``(..., 3)`` RGB in [0, 1] to HSV with hue in degrees [0, 360)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        maxc == r,
        np.mod((g - b) / safe, 6.0),
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([hue, sat, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    sector = h / 60.0
    chans = []
    for n in (5.0, 3.0, 1.0):
        k = np.mod(n + sector, 6.0)
        ramp = np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)
        chans.append(v - v * s * ramp)
    return np.stack(chans, axis=-1)


def shift_hue(img: np.ndarray, deg: float) -> np.ndarray:
    if not math.isfinite(deg):
        raise ValueError(f"hue shift must be finite, got {deg}")
    hsv = rgb_to_hsv(to_float(img) / 255.0)
    hsv[..., 0] = np.mod(hsv[..., 0] + deg, 360.0)
    return quantize(hsv_to_rgb(hsv) * 255.0)


def adjust_saturation(img: np.ndarray, alpha: float) -> np.ndarray:
    if alpha < 0:
        raise ValueError(f"saturation factor must be >= 0, got {alpha}")
    hsv = rgb_to_hsv(to_float(img) / 255.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * alpha, 0.0, 1.0)
    return quantize(hsv_to_rgb(hsv) * 255.0)


def adjust_brightness(img: np.ndarray, beta: float) -> np.ndarray:
    """Add ``beta * 255`` to every sample, then clip."""
    if not -1.0 <= beta <= 1.0:
        raise ValueError(f"brightness delta must be in [-1, 1], got {beta}")
    return quantize(to_float(img) + beta * 255.0)


def adjust_exposure(img: np.ndarray, percent: float) -> np.ndarray:
    """Scale every sample by ``1 + percent / 100``, then clip."""
    if not percent > -100:
        raise ValueError(f"exposure percent must be > -100, got {percent}")
    return quantize(to_float(img) * (1.0 + percent / 100.0))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian of radius ``ceil(3 sigma)``, normalized to sum 1."""
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(f: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * f.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(f, pad, mode="edge")
    n = f.shape[axis]
    out = np.zeros_like(f)
    for i, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return check_image(img).copy()
    k = gaussian_kernel(sigma)
    f = _convolve_axis(to_float(img), k, axis=0)
    f = _convolve_axis(f, k, axis=1)
    return quantize(f)


def add_noise(img: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Salt-and-pepper: ``floor(fraction * W * H)`` distinct pixels get 0/255 per channel."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must be in [0, 1], got {fraction}")
    out = check_image(img).copy()
    h, w = out.shape[:2]
    count = math.floor(fraction * w * h + 1e-9)
    if count == 0:
        return out
    flat = out.reshape(-1, 3)
    idx = rng.choice(w * h, size=count, replace=False)
    flat[idx] = rng.integers(0, 2, size=(count, 3), dtype=np.uint8) * np.uint8(255)
    return out


def cutout_regions(
    width: int, height: int, n: int, area_fraction: float, rng: np.random.Generator
) -> list[tuple[int, int, int, int]]:
    """Half-open ``(x0, y0, x1, y1)`` squares, clipped to the raster.

    Each square has side ``round(sqrt(area_fraction / n * W * H))`` and a
    uniformly drawn center pixel.
    """
    if n < 0:
        raise ValueError(f"cutout count must be >= 0, got {n}")
    if not 0.0 <= area_fraction <= 1.0:
        raise ValueError(f"cutout area fraction must be in [0, 1], got {area_fraction}")
    if n == 0 or area_fraction == 0:
        return []
    side = math.floor(math.sqrt(area_fraction / n * width * height) + 0.5)
    if side == 0:
        return []
    regions = []
    for _ in range(n):
        cx = int(rng.integers(0, width))
        cy = int(rng.integers(0, height))
        x0, y0 = cx - side // 2, cy - side // 2
        regions.append(
            (max(x0, 0), max(y0, 0), min(x0 + side, width), min(y0 + side, height))
        )
    return regions


def fill_regions(img: np.ndarray, regions: list[tuple[int, int, int, int]]) -> np.ndarray:
    out = check_image(img).copy()
    for x0, y0, x1, y1 in regions:
        out[y0:y1, x0:x1] = 0
    return out


def cutout(
    img: np.ndarray, n: int, area_fraction: float, rng: np.random.Generator
) -> np.ndarray:
    check_image(img)
    h, w = img.shape[:2]
    return fill_regions(img, cutout_regions(w, h, n, area_fraction, rng))
