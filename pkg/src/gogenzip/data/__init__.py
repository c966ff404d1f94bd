"""Telemetry ingestion, normalisation, clustering, synthesis and batching."""

from .batching import (
    GOBatch,
    GOSampleSet,
    ReconBatch,
    batch_iter,
    extract_go_samples,
    go_targets,
)
from .clustering import cluster_bs, daily_profiles
from .csvio import load_csv, write_csv
from .dataset import (
    BSSeries,
    TelemetryDataset,
    WindowSet,
    denormalize,
    extract_windows,
    load_manifest,
    normalize,
    save_manifest,
)
from .synth import KPI_NAMES, TASK_KPIS, SynthConfig, synth_generate


def prepare(dataset, n_classes=4, seed=0):
    """Normalise and attach k-means class labels (both from the train split)."""
    ds = normalize(dataset)
    labels, _ = cluster_bs(ds, n_classes, seed=seed)
    return ds.with_classes(labels)


__all__ = [
    "BSSeries", "GOBatch", "GOSampleSet", "KPI_NAMES", "ReconBatch", "SynthConfig", "TASK_KPIS",
    "TelemetryDataset", "WindowSet", "batch_iter", "cluster_bs", "daily_profiles",
    "denormalize", "extract_go_samples", "extract_windows", "go_targets", "load_csv",
    "load_manifest", "normalize", "prepare", "save_manifest", "synth_generate", "write_csv",
]
