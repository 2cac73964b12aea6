"""AdamW update math, decay grouping policies and epoch-metric logs.

Parameters are a mapping from id to float64 array. Ids follow the topology
naming ``<node>.weight`` / ``<node>.bias``. Updates are pure: new parameter
and state objects are returned and inputs are left untouched.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .metrics.epochs import EpochMetrics, select_best_epoch
from .nettopo import NetGraph, parameter_shapes

POLICIES = ("standard", "paper_as_written")
LOG_HEADER = ("epoch", "precision", "recall", "map50", "map50_95")


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 5e-4
    epochs: int = 40

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise OptimizerError("learning_rate must be > 0")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise OptimizerError(f"{name} must be in [0, 1)")
        if self.weight_decay < 0:
            raise OptimizerError("weight_decay must be >= 0")
        if self.epsilon <= 0:
            raise OptimizerError("epsilon must be > 0")


@dataclass(frozen=True)
class ParamGroup:
    ids: tuple[str, ...]
    decay_enabled: bool


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def check_partition(groups: Sequence[ParamGroup], ids: Iterable[str]) -> None:
    seen: dict[str, int] = {}
    for gi, g in enumerate(groups):
        for pid in g.ids:
            if pid in seen:
                raise OptimizerError(f"parameter {pid} is in groups {seen[pid]} and {gi}")
            seen[pid] = gi
    ids = set(ids)
    missing = sorted(ids - seen.keys())
    extra = sorted(seen.keys() - ids)
    if missing or extra:
        raise OptimizerError(f"groups do not partition parameters: missing {missing}, unknown {extra}")


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
    hp: HyperParams = HyperParams(),
    groups: Optional[Sequence[ParamGroup]] = None,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One AdamW step with decoupled decay ``lr * wd * theta`` for decay-enabled groups.

    Decay uses the pre-step parameter value. Without ``groups`` nothing decays.
    """
    if groups is None:
        groups = [ParamGroup(tuple(params), False)]
    check_partition(groups, params)
    decay = {pid: g.decay_enabled for g in groups for pid in g.ids}
    if set(grads) != set(params):
        raise OptimizerError(f"gradients for {sorted(set(grads) ^ set(params))} do not match parameters")
    t = state.t + 1
    bc1 = 1.0 - hp.beta1 ** t
    bc2 = 1.0 - hp.beta2 ** t
    new_params, m_out, v_out = {}, {}, {}
    for pid, theta in params.items():
        theta = np.asarray(theta, dtype=np.float64)
        g = np.asarray(grads[pid], dtype=np.float64)
        if g.shape != theta.shape:
            raise OptimizerError(f"{pid}: gradient shape {g.shape} != parameter shape {theta.shape}")
        if not np.isfinite(g).all():
            raise OptimizerError(f"{pid}: non-finite gradient")
        m = state.m.get(pid, np.zeros_like(theta))
        v = state.v.get(pid, np.zeros_like(theta))
        m = hp.beta1 * m + (1.0 - hp.beta1) * g
        v = hp.beta2 * v + (1.0 - hp.beta2) * g * g
        step = hp.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + hp.epsilon)
        out = theta - step
        if decay[pid]:
            out = out - hp.learning_rate * hp.weight_decay * theta
        new_params[pid] = out
        m_out[pid] = m
        v_out[pid] = v
    return new_params, AdamWState(m_out, v_out, t)


def groups_for_ids(ids: Iterable[str], policy: str = "standard") -> list[ParamGroup]:
    """Split ids ending in ``.weight`` / ``.bias`` into two decay groups.

    ``standard`` decays weights only; ``paper_as_written`` decays biases only.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    ids = list(ids)
    weights = tuple(i for i in ids if not i.endswith(".bias"))
    biases = tuple(i for i in ids if i.endswith(".bias"))
    decay_weights = policy == "standard"
    return [ParamGroup(weights, decay_weights), ParamGroup(biases, not decay_weights)]


def build_param_groups(g: NetGraph, policy: str = "standard") -> list[ParamGroup]:
    groups = groups_for_ids(parameter_shapes(g), policy)
    check_partition(groups, parameter_shapes(g))
    return groups


def init_params(g: NetGraph, rng: np.random.Generator, scale: float = 0.01) -> dict[str, np.ndarray]:
    return {pid: rng.normal(0.0, scale, shape) for pid, shape in parameter_shapes(g).items()}


@dataclass
class TrainingLog:
    series: list[EpochMetrics]
    best_epoch: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for m in self.series:
            w.writerow([m.epoch] + [f"{getattr(m, k):.6f}" for k in LOG_HEADER[1:]])
        return buf.getvalue()

    @property
    def best(self) -> EpochMetrics:
        return next(m for m in self.series if m.epoch == self.best_epoch)


Record = Union[EpochMetrics, Mapping[str, float]]


def run_training_log(records: Sequence[Record], path: Optional[Union[str, Path]] = None) -> TrainingLog:
    """Collect per-epoch metrics, pick the best epoch and optionally persist the CSV."""
    series = [r if isinstance(r, EpochMetrics) else EpochMetrics(
        int(r["epoch"]), *(float(r[k]) for k in LOG_HEADER[1:])) for r in records]
    seen = set()
    for m in series:
        if m.epoch in seen:
            raise ValueError(f"duplicate epoch {m.epoch}")
        seen.add(m.epoch)
    log = TrainingLog(series, select_best_epoch(series))
    if path is not None:
        Path(path).write_text(log.to_csv())
    return log


def read_training_log(text: str) -> TrainingLog:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != LOG_HEADER:
        raise ValueError(f"expected header {','.join(LOG_HEADER)}")
    return run_training_log(rows)


def quadratic_descent(theta0: float, steps: int, hp: HyperParams = HyperParams()) -> list[float]:
    """Iterates of AdamW on ``f(theta) = theta**2 / 2`` without decay."""
    params = {"theta": np.array(float(theta0))}
    state = AdamWState()
    out = [float(theta0)]
    for _ in range(steps):
        params, state = adamw_step(params, {"theta": params["theta"].copy()}, state, hp)
        out.append(float(params["theta"]))
    if not all(math.isfinite(x) for x in out):
        raise OptimizerError("descent diverged")
    return out
