"""Training batches for reconstruction and goal-oriented modes."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError
from ..tasks import build_target
from .dataset import HOURS_PER_DAY, TelemetryDataset, WindowSet, _start_hour, extract_windows

log = logging.getLogger(__name__)


@dataclass
class GOSampleSet:
    """Lookback stacks ``(n, L, K, T)`` and the following hours ``(n, H_max, K)``."""

    lookback: np.ndarray
    future: np.ndarray
    bs_index: np.ndarray
    offset: np.ndarray
    bs_class: np.ndarray
    hour: np.ndarray

    def __len__(self):
        return self.lookback.shape[0]


def extract_go_samples(dataset, split="train", lookback=3, horizon=3, stride=3,
                       t=HOURS_PER_DAY):
    """Goal-oriented samples whose forecast horizon starts inside ``split``.

    Train samples keep their whole lookback and horizon inside the train
    split. Validation/test samples may look back into earlier days (that
    history is observable at forecast time); their horizons never extend
    past the split. Samples with gaps or too little future are skipped.
    """
    if dataset.classes is None:
        raise InvalidArgumentError("dataset has no BS class labels; run cluster_bs first")
    span = lookback * t
    look, fut, bs, offs, hours = [], [], [], [], []
    for i, s in enumerate(dataset.series):
        vals = dataset.values(i)
        lo, hi = dataset.split_hours(s, split)
        first = max(lo if split != "train" else lo + span, span)
        for hs in range(first, hi - horizon + 1, stride):
            a = hs - span
            block = vals[a:hs]
            future = vals[hs:hs + horizon]
            if np.isnan(block).any() or np.isnan(future).any():
                continue
            look.append(block.reshape(lookback, t, -1).transpose(0, 2, 1))
            fut.append(future)
            bs.append(i)
            offs.append(a)
            hours.append(_start_hour(s, a))
    k = dataset.k
    bs = np.asarray(bs, dtype=np.int64)
    return GOSampleSet(
        np.stack(look) if look else np.zeros((0, lookback, k, t)),
        np.stack(fut) if fut else np.zeros((0, horizon, k)),
        bs, np.asarray(offs, dtype=np.int64),
        dataset.classes[bs] if len(bs) else bs, np.asarray(hours, dtype=np.int64),
    )


@dataclass
class ReconBatch:
    x: np.ndarray
    bs_class: np.ndarray
    hour: np.ndarray
    index: np.ndarray

    def __len__(self):
        return self.x.shape[0]


@dataclass
class GOBatch:
    """A task-stratified batch; ``rows[t]`` are the batch rows of task ``t``."""

    lookback: np.ndarray
    task_id: np.ndarray
    bs_class: np.ndarray
    hour: np.ndarray
    targets: dict
    rows: dict
    index: np.ndarray

    def __len__(self):
        return self.lookback.shape[0]


def go_targets(samples, task):
    """Targets of ``task`` for every sample, shape ``(n, out_dim)``."""
    return np.stack([build_target(f[:, task.kpi], task) for f in samples.future])


def batch_iter(samples, mode="reconstruction", batch_size=32, tasks=None, seed=0,
               shuffle=True):
    """Yield batches; shuffling is deterministic in ``seed``.

    In goal-oriented mode every batch holds ``batch_size // len(tasks)``
    samples of each task.
    """
    if isinstance(samples, TelemetryDataset):
        samples = (extract_windows(samples, "train") if mode == "reconstruction"
                   else extract_go_samples(samples, "train"))
    rng = np.random.default_rng(seed)
    n = len(samples)
    if n == 0:
        return
    if mode == "reconstruction":
        if batch_size > n:
            warnings.warn(f"batch size {batch_size} exceeds {n} samples; using one batch",
                          stacklevel=2)
        order = rng.permutation(n) if shuffle else np.arange(n)
        flat = samples.x.reshape(n, -1)
        for a in range(0, n, batch_size):
            idx = order[a:a + batch_size]
            yield ReconBatch(flat[idx], samples.bs_class[idx], samples.hour[idx], idx)
        return
    if mode not in ("goal-oriented", "go"):
        raise InvalidArgumentError(f"unknown batch mode {mode!r}")
    if not tasks:
        raise InvalidArgumentError("goal-oriented batches need a non-empty task list")
    n_tasks = len(tasks)
    per_task = max(batch_size // n_tasks, 1)
    if batch_size % n_tasks:
        warnings.warn(f"batch size {batch_size} is not a multiple of {n_tasks} tasks; "
                      f"using {per_task} per task", stacklevel=2)
    if per_task > n:
        warnings.warn(f"batch size {batch_size} exceeds {n} samples per task; using one batch",
                      stacklevel=2)
    targets = {task.task_id: go_targets(samples, task) for task in tasks}
    orders = {task.task_id: (rng.permutation(n) if shuffle else np.arange(n)) for task in tasks}
    lb = samples.lookback.reshape(n, samples.lookback.shape[1], -1)
    for a in range(0, n, per_task):
        idx_parts, tid_parts, rows, tgt = [], [], {}, {}
        start = 0
        for task in tasks:
            idx = orders[task.task_id][a:a + per_task]
            idx_parts.append(idx)
            tid_parts.append(np.full(len(idx), task.task_id))
            rows[task.task_id] = np.arange(start, start + len(idx))
            tgt[task.task_id] = targets[task.task_id][idx]
            start += len(idx)
        idx = np.concatenate(idx_parts)
        yield GOBatch(lb[idx], np.concatenate(tid_parts), samples.bs_class[idx],
                      samples.hour[idx], tgt, rows, idx)


__all__ = ["GOBatch", "GOSampleSet", "ReconBatch", "WindowSet", "batch_iter",
           "extract_go_samples", "go_targets"]
