"""Combining generative and lossless reconstructions."""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError


def merge_reconstruction(x_hat_g, lossless_values, m_s, m_c):
    """Lossless values where ``m_s & ~m_c``; the generative output everywhere else.

    The generative output also fills unsampled entries, which is how the
    receiver imputes what the source never observed.
    """
    m_s = np.asarray(m_s, dtype=bool)
    m_c = np.asarray(m_c, dtype=bool)
    if np.any(m_c & ~m_s):
        raise ContractError("inconsistent masks: generative entries must be sampled")
    x_hat_g = np.asarray(x_hat_g, dtype=np.float64)
    lossless_values = np.asarray(lossless_values, dtype=np.float64)
    return np.where(m_s & ~m_c, lossless_values, x_hat_g)


def entry_sources(m_s, m_c):
    """Per-entry source label: 0 imputed, 1 generative, 2 lossless."""
    m_s = np.asarray(m_s, dtype=bool)
    m_c = np.asarray(m_c, dtype=bool)
    return np.where(m_s, np.where(m_c, 1, 2), 0)
