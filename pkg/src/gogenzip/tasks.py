"""Forecasting goals defined on reconstructed telemetry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

AGGREGATIONS = ("identity", "mean", "min", "max")


@dataclass(frozen=True)
class TaskSpec:
    """Predict ``phi`` of the next ``horizon`` hourly values of KPI ``kpi``
    from ``lookback`` consecutive reconstructed windows."""

    task_id: int
    kpi: int
    lookback: int = 3
    horizon: int = 3
    phi: str = "mean"
    name: str = ""

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1:
            raise InvalidArgumentError("lookback and horizon must be at least 1")
        if self.phi not in AGGREGATIONS:
            raise InvalidArgumentError(f"unknown aggregation {self.phi!r}")
        if self.kpi < 0:
            raise InvalidArgumentError("kpi index must be non-negative")

    @property
    def out_dim(self):
        return self.horizon if self.phi == "identity" else 1

    def validate(self, k):
        if self.kpi >= k:
            raise InvalidArgumentError(f"task {self.task_id}: KPI {self.kpi} >= K={k}")


def build_target(future, task):
    """``phi`` applied to the next ``H`` values of the target KPI.

    ``future`` holds the target KPI's upcoming values along the last axis.
    Returns None (skip the window) when fewer than ``H`` values are
    available or any is missing.
    """
    future = np.asarray(future, dtype=np.float64)
    if future.shape[-1] < task.horizon:
        return None
    v = future[..., : task.horizon]
    if np.isnan(v).any():
        return None
    if task.phi == "identity":
        return v.copy()
    fn = {"mean": np.mean, "min": np.min, "max": np.max}[task.phi]
    return np.asarray(fn(v, axis=-1))[..., None]


def default_tasks(lookback=3, horizon=3):
    """Six tasks over the synthetic KPIs: PRB usage, RRC, latency, payload, UL rate, HO."""
    from .data.synth import KPI_NAMES, TASK_KPIS

    phis = ("mean", "max", "identity", "mean", "min", "identity")
    return [
        TaskSpec(i, k, lookback, horizon, phi, KPI_NAMES[k])
        for i, (k, phi) in enumerate(zip(TASK_KPIS, phis))
    ]
