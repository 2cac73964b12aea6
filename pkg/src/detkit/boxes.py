"""Normalized YOLO-style boxes and corner conversions."""
from __future__ import annotations

from dataclasses import dataclass


class BoxError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedBox:
    """Class id plus center-format box in fractions of the image size."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise BoxError(f"class_id must be >= 0, got {self.class_id}")
        for name in ("cx", "cy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BoxError(f"{name}={v} outside [0, 1]")
        for name in ("w", "h"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise BoxError(f"{name}={v} outside (0, 1]")

    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @classmethod
    def from_corners(cls, class_id: int, x1: float, y1: float, x2: float, y2: float) -> NormalizedBox:
        return cls(class_id, (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)
