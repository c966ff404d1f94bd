"""CSV ingestion: ``bs_id,timestamp,kpi_0,...,kpi_{K-1}``."""

from __future__ import annotations

import csv
from collections import defaultdict
from datetime import datetime, timedelta

import numpy as np

from ..exceptions import DataValidationError
from .dataset import BSSeries, TelemetryDataset

HOUR = timedelta(hours=1)


def _parse_float(cell, lineno, column):
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na", "null"):
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise DataValidationError(
            f"line {lineno}: column {column!r} is not a number: {cell!r}"
        ) from None


def load_csv(path):
    """Read a telemetry CSV into a :class:`TelemetryDataset`.

    Rows are grouped and sorted per BS. Missing cells and missing hours become
    NaN gaps; duplicate timestamps and strides that are not whole hours are
    validation errors.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: empty dataset (no header row)")
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "bs_id" or not header[1].startswith("timestamp"):
            raise DataValidationError(
                f"{path}: header must be 'bs_id,timestamp,<kpi columns>', got {header[:3]}"
            )
        kpis = header[2:]
        rows = defaultdict(list)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                ts = datetime.fromisoformat(row[1].strip())
            except ValueError:
                raise DataValidationError(
                    f"line {lineno}: bad timestamp {row[1]!r}"
                ) from None
            if ts.tzinfo is not None:
                ts = ts.replace(tzinfo=None) - ts.utcoffset()
            vals = [_parse_float(c, lineno, kpis[j]) for j, c in enumerate(row[2:])]
            rows[row[0].strip()].append((ts, vals))
    if not rows:
        raise DataValidationError(f"{path}: empty dataset (no data rows)")

    series = []
    for bs_id in sorted(rows):
        recs = sorted(rows[bs_id], key=lambda r: r[0])
        stamps = [r[0] for r in recs]
        dupes = [stamps[i] for i in range(1, len(stamps)) if stamps[i] == stamps[i - 1]]
        if dupes:
            raise DataValidationError(
                f"BS {bs_id}: duplicate timestamps {[d.isoformat() for d in dupes[:5]]}"
            )
        bad = [stamps[i] for i in range(1, len(stamps))
               if (stamps[i] - stamps[i - 1]) % HOUR != timedelta(0)]
        if bad:
            raise DataValidationError(
                f"BS {bs_id}: non-hourly stride at {[b.isoformat() for b in bad[:5]]}"
            )
        n_hours = int((stamps[-1] - stamps[0]) / HOUR) + 1
        values = np.full((n_hours, len(kpis)), np.nan)
        for ts, vals in recs:
            values[int((ts - stamps[0]) / HOUR)] = vals
        series.append(BSSeries(bs_id, stamps[0], values))
    return TelemetryDataset(kpi_names=kpis, series=series)


def write_csv(dataset, path, precision=6):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bs_id", "timestamp", *dataset.kpi_names])
        for s in dataset.series:
            for h in range(s.n_hours):
                row = s.values[h]
                if np.isnan(row).all():
                    continue
                ts = (s.start + h * HOUR).isoformat()
                w.writerow([s.bs_id, ts] + ["" if np.isnan(v) else f"{v:.{precision}g}" for v in row])
