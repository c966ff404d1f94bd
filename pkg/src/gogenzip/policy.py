"""Context-conditioned sampling / compression policies.

A policy maps a context vector to a ``D x 3`` matrix of logits. Column 0 is
"do not sample", column 1 "sample and compress with the autoencoder",
column 2 "sample and compress losslessly".
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .exceptions import ContractError, InvalidArgumentError

log = logging.getLogger(__name__)

SKIP, GENERATIVE, LOSSLESS = 0, 1, 2
GUMBEL_U_CLAMP = 1e-12

# Column masks that restrict the choice set per codec variant. Adding a large
# negative constant zeroes the probability without producing NaN gradients.
_BLOCK = -1e4
CODEC_COLUMN_OFFSETS = {
    "hybrid": np.array([0.0, 0.0, 0.0]),
    "generative-only": np.array([0.0, 0.0, _BLOCK]),
    "lossless-only": np.array([0.0, _BLOCK, 0.0]),
}


@dataclass
class Context:
    """Embedded context for a batch of windows."""

    bs_class: np.ndarray
    hour: np.ndarray
    task_id: np.ndarray | None
    vector: nn.Tensor

    @property
    def dim(self):
        return self.vector.shape[-1]


class ContextEncoder:
    """Embedding tables for BS class, hour of day and (optionally) task."""

    def __init__(self, params, n_classes, n_tasks=0, class_dim=8, hour_dim=8, task_dim=8,
                 rng=None, n_hours=24):
        rng = np.random.default_rng(0) if rng is None else rng
        self.bs_class = nn.Embedding(params, "context.bs_class", n_classes, class_dim, rng)
        self.hour = nn.Embedding(params, "context.hour", n_hours, hour_dim, rng)
        self.task = nn.Embedding(params, "context.task", n_tasks, task_dim, rng) if n_tasks else None

    @property
    def dim(self):
        return self.bs_class.dim + self.hour.dim + (self.task.dim if self.task else 0)

    def __call__(self, bs_class, hour, task_id=None):
        return build_context(self, bs_class, hour, task_id)


def build_context(encoder, bs_class, hour, task_id=None):
    """Concatenate the looked-up embeddings; the task is omitted when ``task_id`` is None."""
    bs_class = np.atleast_1d(np.asarray(bs_class, dtype=np.int64))
    hour = np.atleast_1d(np.asarray(hour, dtype=np.int64))
    parts = [encoder.bs_class(bs_class), encoder.hour(hour)]
    tid = None
    if task_id is not None:
        if encoder.task is None:
            raise InvalidArgumentError("task_id given but the context has no task embedding table")
        tid = np.atleast_1d(np.asarray(task_id, dtype=np.int64))
        parts.append(encoder.task(tid))
    return Context(bs_class, hour, tid, nn.concat(parts, axis=-1))


def check_context_size(context_dim, d):
    if context_dim >= d / 4:
        warnings.warn(
            f"context dimension {context_dim} is not small relative to D={d}",
            stacklevel=2,
        )


class AdaptivePolicy:
    """Two-layer MLP with ELU: context -> D x 3 logits."""

    kind = "adaptive"

    def __init__(self, params, context_dim, d, rng, hidden=64, zero_last=False, skip_bias=0.0):
        self.d = d
        self.net = nn.MLP(params, "policy", (context_dim, hidden, 3 * d), rng, act="elu",
                          zero_last=zero_last)
        # Output index i * 3 + j is entry i, choice j.
        self.net.layers[-1].bias.data[SKIP::3] = skip_bias

    def __call__(self, context_vector):
        out = self.net(context_vector)
        return nn.reshape(out, (out.shape[0], self.d, 3))


class FixedPolicy:
    """A single learned logits matrix shared by every context."""

    kind = "fixed"

    def __init__(self, params, d, skip_bias=0.0):
        self.d = d
        init = np.zeros((d, 3))
        init[:, SKIP] = skip_bias
        self.logits = params.add("policy.logits", init)

    def __call__(self, context_vector):
        batch = context_vector.shape[0]
        return nn.reshape(self.logits, (1, self.d, 3)) * np.ones((batch, 1, 1))


def policy_forward(policy, context, codec="hybrid"):
    """Logits ``M`` for each context row, shaped ``(B, D, 3)``."""
    vec = context.vector if isinstance(context, Context) else context
    logits = policy(vec)
    offset = CODEC_COLUMN_OFFSETS[codec]
    if offset.any():
        logits = logits + offset
    return logits


def gumbel_noise(shape, rng):
    u = np.clip(rng.random(shape), GUMBEL_U_CLAMP, 1.0 - GUMBEL_U_CLAMP)
    return -np.log(-np.log(u))


def gumbel_softmax(logits, tau, rng=None, noise=None):
    """Relaxed categorical sample ``softmax((logits + g) / tau)`` along the last axis."""
    if not tau > 0:
        raise InvalidArgumentError(f"temperature must be positive, got {tau}")
    logits = nn.tensor.as_tensor(logits)
    if noise is None:
        noise = gumbel_noise(logits.shape, rng)
    return nn.softmax((logits + noise) * (1.0 / tau), axis=-1)


@dataclass
class PolicyDecision:
    """Hard per-entry choices plus the relaxed sample they came from.

    ``onehot`` is the straight-through tensor: forward value ``hard``,
    gradient routed to ``soft``. It is None for noise-free decoding.
    """

    soft: np.ndarray
    hard: np.ndarray
    m_s: np.ndarray
    m_c: np.ndarray
    tau: float | None = None
    onehot: nn.Tensor | None = field(default=None, repr=False)

    @property
    def choice(self):
        """Per-entry column index (0 skip, 1 generative, 2 lossless)."""
        return self.hard.argmax(axis=-1)

    @property
    def lossless(self):
        return self.m_s & ~self.m_c


def _masks_from_hard(hard):
    m_c = hard[..., GENERATIVE] > 0.5
    m_s = m_c | (hard[..., LOSSLESS] > 0.5)
    return m_s, m_c


def _one_hot(index, n=3):
    return np.eye(n)[index]


def straight_through(soft, tau=None):
    """Discretise a relaxed sample: hard argmax forward, soft gradient backward."""
    soft_t = nn.tensor.as_tensor(soft)
    rows = soft_t.data.sum(axis=-1)
    if np.any(np.abs(rows - 1.0) > 1e-6) or np.any(soft_t.data < -1e-12):
        raise ContractError("straight_through expects rows on the probability simplex")
    hard = _one_hot(soft_t.data.argmax(axis=-1))
    m_s, m_c = _masks_from_hard(hard)
    onehot = nn.straight_through(soft_t, hard)
    return PolicyDecision(soft_t.data, hard, m_s, m_c, tau, onehot)


def hard_decode(logits):
    """Noise-free argmax decision; ties go to the lowest column (prefer not sampling)."""
    m = logits.data if isinstance(logits, nn.Tensor) else np.asarray(logits, dtype=np.float64)
    hard = _one_hot(m.argmax(axis=-1))
    m_s, m_c = _masks_from_hard(hard)
    z = m - m.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    return PolicyDecision(p, hard, m_s, m_c, None, None)


def sample_decision(logits, rng):
    """Hard decision drawn from the categorical distribution ``softmax(logits)``."""
    m = logits.data if isinstance(logits, nn.Tensor) else np.asarray(logits, dtype=np.float64)
    hard = _one_hot((m + gumbel_noise(m.shape, rng)).argmax(axis=-1))
    m_s, m_c = _masks_from_hard(hard)
    return PolicyDecision(hard.copy(), hard, m_s, m_c, None, None)


# ---------------------------------------------------------------------------
# expected costs


def _unit_costs(d, costs):
    if costs is None:
        return np.ones(d)
    costs = np.asarray(costs, dtype=np.float64)
    if costs.shape != (d,) or np.any(costs < 0):
        raise InvalidArgumentError("sampling costs must be a non-negative vector of length D")
    return costs


def expected_sampling_cost(m_s, costs=None):
    """Batch mean of ``sum_i c_i m_s[i]``."""
    m_s = np.atleast_2d(np.asarray(m_s, dtype=np.float64))
    if m_s.shape[0] == 0:
        raise InvalidArgumentError("empty decision batch")
    c = _unit_costs(m_s.shape[1], costs)
    return float((m_s @ c).mean())


def sampling_ratio(m_s, costs=None):
    """Sampling cost normalised by the cost of sampling everything."""
    m_s = np.atleast_2d(np.asarray(m_s, dtype=np.float64))
    c = _unit_costs(m_s.shape[1], costs)
    return expected_sampling_cost(m_s, c) / float(c.sum())


def expected_rate(m_s, m_c, rate_model):
    """Batch mean of ``1{m_s.m_c > 0} R_GE + mean_i m_s (1 - m_c) R_LC``."""
    if rate_model is None or not rate_model.calibrated:
        raise ContractError("rate model is not calibrated")
    m_s = np.atleast_2d(np.asarray(m_s, dtype=bool))
    m_c = np.atleast_2d(np.asarray(m_c, dtype=bool))
    gen = (m_s & m_c).any(axis=1)
    lossless = (m_s & ~m_c).mean(axis=1)
    return float((gen * rate_model.r_ge + lossless * rate_model.r_lc).mean())


def soft_sampling_ratio(probs, costs=None):
    """Differentiable sampling ratio from per-row choice probabilities ``(B, D, 3)``."""
    d = probs.shape[1]
    c = _unit_costs(d, costs)
    sampled = probs[:, :, GENERATIVE] + probs[:, :, LOSSLESS]
    return (sampled * (c / c.sum())).sum(axis=1).mean()


def soft_rate(probs, rate_model):
    """Differentiable rate: the latent indicator is replaced by ``max_i p[i, 1]``."""
    if rate_model is None or not rate_model.calibrated:
        raise ContractError("rate model is not calibrated")
    gen_any = nn.tmax(probs[:, :, GENERATIVE], axis=1)
    lossless = probs[:, :, LOSSLESS].mean(axis=1)
    return (gen_any * rate_model.r_ge + lossless * rate_model.r_lc).mean()


def row_entropy(probs):
    p = np.clip(np.asarray(probs), 1e-300, 1.0)
    return -(p * np.log(p)).sum(axis=-1)


def temperature(epoch, n_epochs, tau_start=1.0, tau_end=0.1):
    """Exponential annealing from ``tau_start`` (first epoch) to ``tau_end`` (last)."""
    if n_epochs <= 1:
        return tau_end
    frac = min(max(epoch / (n_epochs - 1), 0.0), 1.0)
    return float(tau_start * (tau_end / tau_start) ** frac)


def mask_grid(decision, k, t):
    """``T x K`` grid of choices (0 skip, 1 generative, 2 lossless) for one window.

    ``decision`` is a :class:`PolicyDecision` or an array of per-entry choices.

    Entries are laid out KPI-major (index ``k * T + hour``) in the flattened
    window, so the grid is the transpose of the reshaped choice vector.
    """
    choice = np.asarray(getattr(decision, "choice", decision)).reshape(-1)
    return choice.reshape(k, t).T
