"""Seeded synthetic multi-KPI telemetry.

Each BS belongs to a traffic class with its own diurnal load shape. KPIs are
driven by a few shared latent factors (load, mobility, radio quality), so
many of them are predictable from each other. On top of that:

* every class has a handful of *volatile* KPIs carrying a strong
  independent AR(1) component, different per class;
* count KPIs (attempts, failures) are Poisson draws, so they take few
  distinct values and some of them are sparse;
* the KPIs used as forecasting targets carry a persistent idiosyncratic
  component, so their own recent history matters for prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from ..exceptions import InvalidArgumentError
from .dataset import HOURS_PER_DAY, BSSeries, TelemetryDataset

KPI_NAMES = [
    "dl_prb_usage", "ul_prb_usage", "rrc_connected_users", "rrc_setup_attempts",
    "rrc_setup_success_rate", "dl_latency", "ul_latency", "dl_payload", "ul_payload",
    "dl_throughput", "ul_rate", "ho_attempts", "ho_success_rate", "ho_failures", "cqi_avg",
    "rsrp_avg", "rsrq_avg", "sinr_avg", "active_ues_dl", "active_ues_ul",
    "erab_setup_attempts", "erab_drop_rate", "volte_traffic", "paging_attempts",
    "cell_availability", "dl_bler", "ul_bler", "prach_attempts", "cpu_load",
    "power_consumption", "interference_ul", "dl_mcs_avg", "ul_mcs_avg", "tau_attempts",
]

# The six forecasting targets: DL PRB usage, RRC connections, latency,
# DL payload, UL rate and handover attempts.
TASK_KPIS = (0, 2, 5, 7, 10, 11)
COUNT_KPIS = (3, 11, 13, 20, 23, 27, 33)
SPARSE_KPIS = (13, 21)
VOLATILE_PER_CLASS = 5


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_bs: int = 64
    n_days: int = 10
    n_classes: int = 4
    noise: float = 1.0
    weekend_effect: float = 1.0
    start: str = "2024-01-01T00:00:00"


def _ar1(rng, n, phi, size=None):
    """Stationary unit-variance AR(1) paths, shape ``(size, n)``."""
    size = 1 if size is None else size
    eps = rng.standard_normal((size, n))
    out = np.empty((size, n))
    out[:, 0] = eps[:, 0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[:, t] = phi * out[:, t - 1] + scale * eps[:, t]
    return out


def class_profiles(n_classes, rng):
    """Diurnal load shape per class, values in [0.15, 1], shape ``(n_classes, 24)``."""
    h = np.arange(HOURS_PER_DAY)
    out = np.empty((n_classes, HOURS_PER_DAY))
    for c in range(n_classes):
        peak = (13.0 + HOURS_PER_DAY * c / n_classes) % HOURS_PER_DAY
        n_harm = 1 + c % 3
        shape = np.cos(2 * np.pi * (h - peak) / HOURS_PER_DAY)
        for m in range(2, n_harm + 1):
            amp = rng.uniform(0.15, 0.35)
            shape = shape + amp * np.cos(2 * np.pi * m * (h - peak) / HOURS_PER_DAY)
        shape = (shape - shape.min()) / (shape.max() - shape.min())
        out[c] = 0.15 + 0.85 * shape
    return out


def _mobility_profile():
    h = np.arange(HOURS_PER_DAY)
    bump = lambda mu, s: np.exp(-0.5 * ((h - mu) / s) ** 2)  # noqa: E731
    return 0.2 + bump(8.0, 1.5) + 0.9 * bump(18.0, 2.0)


def synth_generate(seed=0, n_bs=64, n_days=10, n_classes=4, noise=1.0, weekend_effect=1.0,
                   start="2024-01-01T00:00:00", return_truth=False):
    """Generate a raw (unnormalised) :class:`TelemetryDataset`.

    With ``noise=0`` the data are deterministic: every BS repeats its
    weekday profile on weekdays and its weekend profile on weekends (and
    every day is identical when ``weekend_effect=0`` as well).
    """
    if min(n_bs, n_days, n_classes) <= 0:
        raise InvalidArgumentError("n_bs, n_days and n_classes must be positive")
    if n_classes > n_bs:
        raise InvalidArgumentError("more classes than base stations")
    rng = np.random.default_rng(seed)
    k = len(KPI_NAMES)
    n = n_days * HOURS_PER_DAY
    t0 = datetime.fromisoformat(start)
    hour = (t0.hour + np.arange(n)) % HOURS_PER_DAY
    day = (t0.hour + np.arange(n)) // HOURS_PER_DAY
    weekend = ((t0.weekday() + day) % 7) >= 5

    profiles = class_profiles(n_classes, rng)
    mobility = _mobility_profile()
    weekend_drop = rng.uniform(0.05, 0.4, size=n_classes)

    # Factor loadings: load, mobility, quality. Fixed across classes so the
    # coupling structure is shared; volatility is class specific.
    w_load = rng.uniform(0.3, 1.0, size=k) * rng.choice([-1.0, 1.0], size=k, p=[0.25, 0.75])
    w_mob = rng.uniform(0.0, 0.6, size=k)
    w_qual = rng.uniform(-0.5, 0.5, size=k)
    offsets = rng.uniform(0.5, 2.0, size=k)
    candidates = [j for j in range(k) if j not in TASK_KPIS and j not in SPARSE_KPIS]
    perm = rng.permutation(candidates)
    volatile = {
        c: np.sort(perm[(c * VOLATILE_PER_CLASS) % len(perm):][:VOLATILE_PER_CLASS])
        for c in range(n_classes)
    }

    labels = np.repeat(np.arange(n_classes), int(np.ceil(n_bs / n_classes)))[:n_bs]
    labels = rng.permutation(labels)

    series = []
    for b in range(n_bs):
        c = labels[b]
        amp = rng.uniform(0.7, 1.3)
        wk = 1.0 - weekend_effect * weekend_drop[c] * weekend
        f_load = profiles[c][hour] * amp * wk * np.exp(0.2 * noise * _ar1(rng, n, 0.9)[0])
        f_mob = mobility[hour] * rng.uniform(0.6, 1.4) * np.exp(0.25 * noise * _ar1(rng, n, 0.85)[0])
        f_qual = 0.5 * noise * _ar1(rng, n, 0.97)[0] - 0.4 * f_load

        base = offsets + np.outer(f_load, w_load) + np.outer(f_mob, w_mob) + np.outer(f_qual, w_qual)
        idio = 0.04 * _ar1(rng, n, 0.8, size=k).T
        for j in volatile[c]:
            idio[:, j] = 0.7 * _ar1(rng, n, 0.75)[0]
        for j in TASK_KPIS:
            idio[:, j] += 0.35 * _ar1(rng, n, 0.9)[0]
        vals = base + noise * idio + noise * 0.02 * rng.standard_normal((n, k))

        for j in COUNT_KPIS:
            lam = 6.0 * np.clip(vals[:, j], 0.05, None)
            vals[:, j] = rng.poisson(lam) if noise > 0 else np.round(lam)
        for j in SPARSE_KPIS:
            spikes = rng.random(n) < 0.06 * f_load
            burst = rng.geometric(0.4, size=n)
            vals[:, j] = np.where(spikes, burst, 0.0) if noise > 0 else 0.0
        series.append(BSSeries(f"bs{b:04d}", t0, vals))

    meta = {"generator": "synth", "seed": seed, "n_classes": n_classes, "noise": noise,
            "weekend_effect": weekend_effect, "task_kpis": list(TASK_KPIS),
            "volatile": {int(c): [int(j) for j in v] for c, v in volatile.items()}}
    ds = TelemetryDataset(kpi_names=list(KPI_NAMES), series=series, meta=meta)
    if return_truth:
        return ds, labels
    return ds
