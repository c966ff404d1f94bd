"""Grouping base stations into traffic classes."""

from __future__ import annotations

import numpy as np
from sklearn.cluster import KMeans

from ..exceptions import DataValidationError, InvalidArgumentError
from .dataset import HOURS_PER_DAY


def daily_profiles(dataset, split="train"):
    """Mean normalised day (K x 24, flattened) per BS over its complete days in ``split``."""
    out = []
    for i, s in enumerate(dataset.series):
        vals = dataset.values(i)
        lo, hi = dataset.split_hours(s, split)
        days = [vals[a:a + HOURS_PER_DAY] for a in range(lo, hi - HOURS_PER_DAY + 1, HOURS_PER_DAY)]
        days = [d for d in days if not np.isnan(d).any()]
        if not days:
            raise DataValidationError(f"BS {s.bs_id} has no complete day in the {split} split")
        out.append(np.mean(days, axis=0).T.reshape(-1))
    return np.stack(out)


def _canonical_labels(labels):
    """Relabel clusters in order of first appearance so labels are reproducible."""
    mapping = {}
    for lab in labels:
        mapping.setdefault(int(lab), len(mapping))
    return np.array([mapping[int(lab)] for lab in labels], dtype=np.int64)


def cluster_bs(dataset, n_classes, seed=0, n_init=20):
    """k-means on per-BS mean daily profiles (train split only).

    Returns ``(labels, centroids)``.
    """
    if n_classes < 1:
        raise InvalidArgumentError("n_classes must be at least 1")
    if n_classes > dataset.n_bs:
        raise InvalidArgumentError(
            f"cannot form {n_classes} classes from {dataset.n_bs} base stations"
        )
    profiles = daily_profiles(dataset)
    if n_classes == 1:
        return np.zeros(dataset.n_bs, dtype=np.int64), profiles.mean(axis=0, keepdims=True)
    km = KMeans(n_clusters=n_classes, n_init=n_init, random_state=seed).fit(profiles)
    labels = _canonical_labels(km.labels_)
    order = [int(km.labels_[np.flatnonzero(labels == c)[0]]) for c in range(n_classes)]
    return labels, km.cluster_centers_[order]
