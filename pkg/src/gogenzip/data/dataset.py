"""Telemetry dataset container, splits, normalisation and window extraction."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from ..exceptions import DataValidationError, InvalidArgumentError

log = logging.getLogger(__name__)

HOURS_PER_DAY = 24
SPLITS = ("train", "val", "test")


@dataclass
class BSSeries:
    """Hourly KPI records of one base station; NaN marks a gap."""

    bs_id: str
    start: datetime
    values: np.ndarray

    @property
    def n_hours(self):
        return self.values.shape[0]

    @property
    def n_days(self):
        return self.n_hours // HOURS_PER_DAY

    @property
    def gaps(self):
        return np.isnan(self.values).any(axis=1)


@dataclass
class TelemetryDataset:
    kpi_names: list
    series: list
    bounds: np.ndarray | None = None
    normalized: list | None = None
    classes: np.ndarray | None = None
    split_fractions: tuple = (0.7, 0.15, 0.15)
    clip_rate: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.kpi_names)

    @property
    def n_bs(self):
        return len(self.series)

    @property
    def bs_ids(self):
        return [s.bs_id for s in self.series]

    def n_windows(self, t=HOURS_PER_DAY):
        return sum(s.n_hours // t for s in self.series)

    def split_days(self, n_days):
        """Day counts per split: first 70% train, next 15% val, rest test."""
        n_train = int(np.floor(self.split_fractions[0] * n_days + 1e-9))
        n_val = int(np.floor(self.split_fractions[1] * n_days + 1e-9))
        n_train = max(n_train, 1) if n_days else 0
        return n_train, n_val, n_days - n_train - n_val

    def split_hours(self, series, split):
        """Half-open hour range ``[lo, hi)`` of ``split`` for one BS."""
        n_train, n_val, n_test = self.split_days(series.n_days)
        edges = np.cumsum([0, n_train, n_val, n_test]) * HOURS_PER_DAY
        i = SPLITS.index(split)
        return int(edges[i]), int(edges[i + 1])

    def values(self, i, normalized=True):
        if normalized:
            if self.normalized is None:
                raise InvalidArgumentError("dataset is not normalised yet")
            return self.normalized[i]
        return self.series[i].values

    def with_classes(self, labels):
        return replace(self, classes=np.asarray(labels, dtype=np.int64))

    @property
    def n_classes(self):
        return 0 if self.classes is None else int(self.classes.max()) + 1

    def manifest(self):
        return {
            "k": self.k,
            "kpi_names": list(self.kpi_names),
            "n_bs": self.n_bs,
            "bs_ids": self.bs_ids,
            "n_days": [s.n_days for s in self.series],
            "start": [s.start.isoformat() for s in self.series],
            "classes": None if self.classes is None else [int(c) for c in self.classes],
            "split_fractions": list(self.split_fractions),
            "split_days": [list(self.split_days(s.n_days)) for s in self.series],
            "bounds": None if self.bounds is None else self.bounds.tolist(),
            "meta": self.meta,
        }


def normalize(dataset):
    """Per-KPI min-max scaling with bounds from the train split only.

    Validation and test values outside the train range are clipped into
    [0, 1]; the fraction clipped per split is stored in ``clip_rate``.
    """
    train = [s.values[slice(*dataset.split_hours(s, "train"))] for s in dataset.series]
    train = [t for t in train if t.size]
    if not train:
        raise DataValidationError("train split is empty")
    stacked = np.concatenate(train, axis=0)
    lo = np.nanmin(stacked, axis=0)
    hi = np.nanmax(stacked, axis=0)
    if np.any(np.isnan(lo)):
        raise DataValidationError("a KPI has no observed training values")
    bounds = np.stack([lo, hi], axis=1)
    constant = hi <= lo
    for j in np.flatnonzero(constant):
        log.warning("KPI %r is constant on the train split; mapping it to 0.5",
                    dataset.kpi_names[j])
    span = np.where(constant, 1.0, hi - lo)
    normalized, clipped, counted = [], dict.fromkeys(SPLITS, 0), dict.fromkeys(SPLITS, 0)
    for s in dataset.series:
        z = (s.values - lo) / span
        z[:, constant] = np.where(np.isnan(z[:, constant]), np.nan, 0.5)
        for split in SPLITS:
            a, b = dataset.split_hours(s, split)
            block = z[a:b]
            ok = ~np.isnan(block)
            clipped[split] += int(((block < 0) | (block > 1))[ok].sum())
            counted[split] += int(ok.sum())
        normalized.append(np.clip(z, 0.0, 1.0))
    clip_rate = {sp: clipped[sp] / counted[sp] if counted[sp] else 0.0 for sp in SPLITS}
    return replace(dataset, bounds=bounds, normalized=normalized, clip_rate=clip_rate)


def denormalize(values, bounds, kpi_axis=0):
    """Map normalised values back to KPI units (KPI along ``kpi_axis``)."""
    bounds = np.asarray(bounds)
    shape = [1] * np.ndim(values)
    shape[kpi_axis] = -1
    lo = bounds[:, 0].reshape(shape)
    span = (bounds[:, 1] - bounds[:, 0]).reshape(shape)
    return lo + np.asarray(values) * span


@dataclass
class WindowSet:
    """Windows of shape ``(n, K, T)`` with their provenance and context indices."""

    x: np.ndarray
    bs_index: np.ndarray
    offset: np.ndarray
    bs_class: np.ndarray
    hour: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    @property
    def flat(self):
        return self.x.reshape(self.x.shape[0], -1)


def _window_starts(lo, hi, length, stride):
    return range(lo, hi - length + 1, stride)


def _start_hour(series, offset):
    return (series.start.hour + offset) % HOURS_PER_DAY


def extract_windows(dataset, split="train", t=HOURS_PER_DAY, stride=HOURS_PER_DAY):
    """All gap-free ``K x t`` windows lying entirely inside ``split``."""
    if dataset.classes is None:
        raise InvalidArgumentError("dataset has no BS class labels; run cluster_bs first")
    xs, bs, offs, hours = [], [], [], []
    for i, s in enumerate(dataset.series):
        vals = dataset.values(i)
        lo, hi = dataset.split_hours(s, split)
        for a in _window_starts(lo, hi, t, stride):
            block = vals[a:a + t]
            if np.isnan(block).any():
                continue
            xs.append(block.T)
            bs.append(i)
            offs.append(a)
            hours.append(_start_hour(s, a))
    k = dataset.k
    x = np.stack(xs) if xs else np.zeros((0, k, t))
    bs = np.asarray(bs, dtype=np.int64)
    return WindowSet(x, bs, np.asarray(offs, dtype=np.int64),
                     dataset.classes[bs] if len(bs) else bs, np.asarray(hours, dtype=np.int64))


def save_manifest(dataset, path):
    with open(path, "w") as fh:
        json.dump(dataset.manifest(), fh, indent=1)


def load_manifest(path):
    with open(path) as fh:
        return json.load(fh)
