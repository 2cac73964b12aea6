"""Desk-scale numeric kernels: SiLU, direct convolution, RepConv fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def silu(x):
    """``x / (1 + exp(-x))``, elementwise; scalars stay scalars."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = x / (1.0 + np.exp(-x))
    return float(out) if out.ndim == 0 else out


@dataclass
class ConvKernel:
    weight: np.ndarray  # (out_ch, in_ch, ky, kx)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    padding: int = 0
    activation: str = "none"

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 4:
            raise ValueError(f"weight must be 4-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} outputs")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("kernel has non-finite values")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        if self.activation not in ("silu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


def conv2d_forward(x: np.ndarray, k: ConvKernel) -> np.ndarray:
    """Direct zero-padded convolution of a (C, H, W) tensor, then bias and activation.

    Taps accumulate in (in_ch, ky, kx) order so results are reproducible
    against a scalar loop with the same order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != k.in_channels:
        raise ValueError(f"input shape {x.shape} does not match kernel with {k.in_channels} input channels")
    if not np.isfinite(x).all():
        raise ValueError("input has non-finite values")
    kh, kw = k.size
    p, s = k.padding, k.stride
    _, h, w = x.shape
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {p}")
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.zeros((k.out_channels, oh, ow))
    for ci in range(k.in_channels):
        for ky in range(kh):
            for kx in range(kw):
                patch = xp[ci, ky : ky + s * (oh - 1) + 1 : s, kx : kx + s * (ow - 1) + 1 : s]
                out += k.weight[:, ci, ky, kx][:, None, None] * patch
    out += k.bias[:, None, None]
    if k.activation == "silu":
        out = silu(out)
    return out


def repconv_fuse(w3: ConvKernel, w1: ConvKernel, identity: bool = False) -> ConvKernel:
    """Collapse 3x3 + 1x1 (+ identity) branches into one 3x3 kernel.

    Branches must be linear (activation ``none``); any post-sum activation
    belongs to the caller.
    """
    if w3.size != (3, 3) or w3.stride != 1 or w3.padding != 1:
        raise ValueError("w3 must be a 3x3 kernel with stride 1 and padding 1")
    if w1.size != (1, 1) or w1.stride != 1 or w1.padding != 0:
        raise ValueError("w1 must be a 1x1 kernel with stride 1 and padding 0")
    if w3.weight.shape[:2] != w1.weight.shape[:2]:
        raise ValueError(f"channel mismatch: w3 {w3.weight.shape[:2]} vs w1 {w1.weight.shape[:2]}")
    if identity and w3.out_channels != w3.in_channels:
        raise ValueError("identity branch requires in_ch == out_ch")
    if w3.activation != "none" or w1.activation != "none":
        raise ValueError("branches must be linear to fuse")
    weight = w3.weight.copy()
    weight[:, :, 1, 1] += w1.weight[:, :, 0, 0]
    if identity:
        idx = np.arange(w3.out_channels)
        weight[idx, idx, 1, 1] += 1.0
    return ConvKernel(weight, w3.bias + w1.bias, stride=1, padding=1)


def repconv_branches(x: np.ndarray, w3: ConvKernel, w1: ConvKernel, identity: bool = False) -> np.ndarray:
    """Training-time multi-branch output: ``conv3(x) + conv1(x) [+ x]``."""
    out = conv2d_forward(x, w3) + conv2d_forward(x, w1)
    if identity:
        out = out + x
    return out


def random_repconv(rng: np.random.Generator, channels: int, out_channels=None, scale: float = 1.0):
    """Random (w3, w1) branch pair for self-checks."""
    co = out_channels or channels
    w3 = ConvKernel(rng.normal(0, scale, (co, channels, 3, 3)), rng.normal(0, scale, co), 1, 1)
    w1 = ConvKernel(rng.normal(0, scale, (co, channels, 1, 1)), rng.normal(0, scale, co), 1, 0)
    return w3, w1


def fusion_error(x: np.ndarray, w3: ConvKernel, w1: ConvKernel, identity: bool = False) -> float:
    fused = repconv_fuse(w3, w1, identity)
    return float(np.max(np.abs(repconv_branches(x, w3, w1, identity) - conv2d_forward(x, fused))))
