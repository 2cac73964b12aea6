from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    precision: float
    recall: float
    map50: float
    map50_95: float

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "map50", "map50_95"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"epoch {self.epoch}: {name}={v} outside [0, 1]")


def select_best_epoch(series: Sequence[EpochMetrics]) -> int:
    """Epoch with the highest mAP50-95; the earliest such epoch wins ties."""
    if not series:
        raise ValueError("empty epoch series")
    best = min(series, key=lambda m: (-m.map50_95, m.epoch))
    return best.epoch
