"""Rate accounting: calibrated per-entry costs and measured compression ratios."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ContractError, InvalidArgumentError
from .container import fixed_overhead
from .lossless import lossless_encode

RAW_BITS = 16
LATENT_BITS = 32
MIN_CALIBRATION_WINDOWS = 100


@dataclass(frozen=True)
class RateModel:
    """Normalised bit costs; 1.0 is the size of the raw 16-bit window.

    ``r_ge`` is charged once per window whenever the latent is sent,
    ``r_lc`` per losslessly coded entry (divided by D in the rate).
    """

    d: int
    latent_dim: int
    r_ge: float
    r_lc: float
    n_calibration: int = 0

    @property
    def calibrated(self):
        return self.r_lc > 0 and self.n_calibration > 0

    @property
    def raw_bytes(self):
        return self.d * RAW_BITS // 8

    def predict_container_bytes(self, m_s, m_c):
        """Container size implied by the rate formula plus fixed framing."""
        m_s = np.atleast_2d(np.asarray(m_s, dtype=bool))
        m_c = np.atleast_2d(np.asarray(m_c, dtype=bool))
        gen = (m_s & m_c).any(axis=1)
        lossless = (m_s & ~m_c).sum(axis=1)
        payload = gen * self.r_ge * self.raw_bytes + lossless * self.r_lc * RAW_BITS / 8
        return fixed_overhead(self.d) + payload

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def generative_rate(latent_dim, d):
    return latent_dim * LATENT_BITS / (d * RAW_BITS)


def calibrate_rate_model(windows, latent_dim, masks=None, density=0.5, rng=None):
    """Measure the mean LZMA cost per lossless entry on calibration windows.

    ``masks`` are the lossless masks to encode; when omitted, Bernoulli
    masks with the given ``density`` are drawn from ``rng``.
    """
    windows = np.asarray(windows, dtype=np.float64)
    windows = windows.reshape(windows.shape[0], -1)
    n, d = windows.shape
    if n < MIN_CALIBRATION_WINDOWS:
        raise ContractError(
            f"calibration needs at least {MIN_CALIBRATION_WINDOWS} windows, got {n}"
        )
    if masks is None:
        rng = np.random.default_rng(0) if rng is None else rng
        masks = rng.random((n, d)) < density
    masks = np.asarray(masks, dtype=bool).reshape(n, d)
    per_entry = []
    for x, m in zip(windows, masks):
        count = int(m.sum())
        if count == 0:
            continue
        per_entry.append(8 * len(lossless_encode(x, m)) / count)
    if not per_entry:
        raise ContractError("calibration masks select no lossless entries")
    r_lc = float(np.mean(per_entry)) / RAW_BITS
    return RateModel(d=d, latent_dim=int(latent_dim), r_ge=generative_rate(latent_dim, d),
                     r_lc=r_lc, n_calibration=n)


def measured_cr(n_windows_or_d, containers, d=None):
    """Raw bytes (2 per entry) over total container bytes.

    Call as ``measured_cr(windows, containers)`` with an array of windows, or
    ``measured_cr(n_windows, containers, d=D)``.
    """
    containers = list(containers)
    if not containers:
        raise InvalidArgumentError("no containers to measure")
    if d is None:
        w = np.asarray(n_windows_or_d)
        n, d = w.shape[0], int(np.prod(w.shape[1:]))
    else:
        n = int(n_windows_or_d)
    if n != len(containers):
        raise InvalidArgumentError(f"{n} windows but {len(containers)} containers")
    raw = n * d * RAW_BITS // 8
    return raw / float(sum(len(c) for c in containers))


def rate_budget_for_cr(cr, d):
    """Normalised rate budget whose containers hit compression ratio ``cr``.

    The fixed framing (header, bitsets, length field) is paid regardless of
    the rate, so it is subtracted before normalising.
    """
    if cr <= 0:
        raise InvalidArgumentError(f"compression ratio must be positive, got {cr}")
    raw = d * RAW_BITS / 8
    budget = (raw / cr - fixed_overhead(d)) / raw
    if budget <= 0:
        raise InvalidArgumentError(
            f"CR {cr} is unreachable: framing alone gives CR {raw / fixed_overhead(d):.3f}"
        )
    return budget


def cr_for_rate(rate, d):
    raw = d * RAW_BITS / 8
    return raw / (fixed_overhead(d) + rate * raw)


def latent_dim_for_rate(rate, d):
    return max(1, int(rate * d * RAW_BITS / LATENT_BITS))
