"""The full sampling + hybrid compression network and its wire-level codec."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .codec import (
    CompressedPayload,
    ConditionalAutoencoder,
    RateModel,
    lossless_decode,
    lossless_encode,
    merge_reconstruction,
    quantize_grid,
)
from .exceptions import CompatibilityError, ContractError, InvalidArgumentError
from .policy import (
    GENERATIVE,
    LOSSLESS,
    AdaptivePolicy,
    ContextEncoder,
    FixedPolicy,
    PolicyDecision,
    check_context_size,
    gumbel_softmax,
    hard_decode,
    policy_forward,
    sample_decision,
    straight_through,
)
from .tasks import TaskSpec

CODECS = ("hybrid", "generative-only", "lossless-only")
POLICIES = ("adaptive", "fixed")


@dataclass
class ModelConfig:
    k: int = 34
    t: int = 24
    n_classes: int = 4
    latent_dim: int = 64
    codec: str = "hybrid"
    policy: str = "adaptive"
    emb_dim: int = 8
    policy_hidden: int = 64
    # Initial "skip" logit: negative values start training near full sampling.
    skip_bias: float = 0.0
    ae_hidden: tuple = (512, 256)
    head_sizes: tuple = (128, 64, 32)
    head_dropout: float = 0.1
    tasks: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.codec not in CODECS:
            raise InvalidArgumentError(f"codec must be one of {CODECS}, got {self.codec!r}")
        if self.policy not in POLICIES:
            raise InvalidArgumentError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        self.ae_hidden = tuple(self.ae_hidden)
        self.head_sizes = tuple(self.head_sizes)
        self.tasks = [t if isinstance(t, TaskSpec) else TaskSpec(**t) for t in self.tasks]

    @property
    def d(self):
        return self.k * self.t

    def to_dict(self):
        out = asdict(self)
        out["tasks"] = [asdict(t) for t in self.tasks]
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class GenZipModel:
    """Context embeddings, policy, conditional autoencoder and optional task heads."""

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params = nn.ParamSet()
        n_tasks = max((t.task_id for t in config.tasks), default=-1) + 1
        e = config.emb_dim
        self.context = ContextEncoder(self.params, config.n_classes, n_tasks, e, e, e, rng)
        d = config.d
        check_context_size(self.context.dim, d)
        if config.policy == "adaptive":
            self.policy = AdaptivePolicy(self.params, self.context.dim, d, rng,
                                         hidden=config.policy_hidden,
                                         skip_bias=config.skip_bias)
        else:
            self.policy = FixedPolicy(self.params, d, skip_bias=config.skip_bias)
        self.ae = ConditionalAutoencoder(self.params, d, self.context.dim, config.latent_dim, rng,
                                         hidden=config.ae_hidden)
        self.heads = {}
        for task in config.tasks:
            task.validate(config.k)
            sizes = (task.lookback * d, *config.head_sizes, task.out_dim)
            self.heads[task.task_id] = nn.MLP(self.params, f"head.{task.task_id}", sizes, rng,
                                              act="gelu", dropout_rate=config.head_dropout)
        self.tasks = {t.task_id: t for t in config.tasks}
        self.rate_model = None

    @property
    def d(self):
        return self.config.d

    @property
    def codec(self):
        return self.config.codec

    def with_tasks(self, tasks):
        """A copy of this model with task heads and a task embedding added.

        Shared weights are copied; the input rows that read the new task
        embedding start at zero, so the copy initially behaves like the
        original.
        """
        cfg = ModelConfig.from_dict({**self.config.to_dict(),
                                     "tasks": [asdict(t) for t in tasks]})
        new = GenZipModel(cfg)
        for name, p in self.params.items():
            target = new.params[name].data
            src = p.data
            if src.shape == target.shape:
                target[...] = src
            else:
                # First layers of context-reading nets: extra trailing input rows.
                target[...] = 0.0
                target[: src.shape[0]] = src
        new.rate_model = self.rate_model
        return new

    # ------------------------------------------------------------------ policy

    def encode_context(self, bs_class, hour, task_id=None):
        if task_id is not None and self.context.task is None:
            task_id = None
        return self.context(bs_class, hour, task_id)

    def logits(self, context):
        return policy_forward(self.policy, context, self.codec)

    def init_policy_bias(self, probs):
        """Start the policy at the given ``(skip, generative, lossless)`` probabilities."""
        probs = np.clip(np.asarray(probs, dtype=np.float64), 1e-4, None)
        logp = np.log(probs / probs.sum())
        if self.config.policy == "adaptive":
            bias = self.policy.net.layers[-1].bias.data.reshape(self.d, 3)
            bias[:] = logp
        else:
            self.policy.logits.data[:] = logp

    def decide(self, logits, deterministic=True, rng=None):
        return hard_decode(logits) if deterministic else sample_decision(logits, rng)

    # ------------------------------------------------------------ training path

    def forward_train(self, x, context, tau, rng=None, relaxed=False, noise=None, clamp=True):
        """Differentiable reconstruction of a batch of flattened windows.

        With ``relaxed=True`` the relaxed sample itself is used as the mask
        (no straight-through discretisation); gradient checks rely on it.
        Returns ``(x_hat, probs, decision)``.
        """
        x = np.asarray(x, dtype=np.float64)
        logits = self.logits(context)
        probs = nn.softmax(logits, axis=-1)
        soft = gumbel_softmax(logits, tau, rng, noise=noise)
        decision = straight_through(soft, tau)
        y = soft if relaxed else decision.onehot
        y_gen = y[:, :, GENERATIVE]
        y_lossless = y[:, :, LOSSLESS]
        x_g = y_gen * x
        latent = self.ae.encode(x_g, context.vector)
        x_hat_g = self.ae.decode(latent, context.vector, clamp=clamp)
        # Lossless values are exact constants: no gradient flows into them.
        x_q = quantize_grid(x)
        x_hat = x_hat_g + y_lossless * (x_q - x_hat_g)
        return x_hat, probs, decision

    def predict_tasks(self, x_hat_stack, task_ids, training=False, rng=None):
        """Run each task head on its rows of ``x_hat_stack`` (B x L*D).

        Returns ``{task_id: (rows, prediction_tensor)}``.
        """
        task_ids = np.asarray(task_ids)
        out = {}
        for tid in np.unique(task_ids):
            tid = int(tid)
            rows = np.flatnonzero(task_ids == tid)
            head = self.heads[tid]
            expected = self.tasks[tid].lookback * self.d
            if x_hat_stack.shape[-1] != expected:
                raise ContractError(
                    f"task {tid} expects {self.tasks[tid].lookback} windows "
                    f"({expected} values), got {x_hat_stack.shape[-1]} values"
                )
            out[tid] = (rows, head(nn.take_rows(x_hat_stack, rows), training=training, rng=rng))
        return out

    # ---------------------------------------------------------------- wire path

    def compress_batch(self, x, bs_class, hour, task_id=None, decision=None, deterministic=True,
                       rng=None):
        """Encode flattened windows into :class:`CompressedPayload` objects.

        Returns ``(payloads, decision)``.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.d)
        n = x.shape[0]
        bs_class = np.broadcast_to(np.asarray(bs_class), (n,))
        hour = np.broadcast_to(np.asarray(hour), (n,))
        tids = None if task_id is None else np.broadcast_to(np.asarray(task_id), (n,))
        ctx = self.encode_context(bs_class, hour, tids)
        if decision is None:
            decision = self.decide(self.logits(ctx), deterministic, rng)
        m_s, m_c = decision.m_s, decision.m_c
        latent = self.ae.encode(m_c * x, ctx.vector).data.astype("<f4")
        payloads = []
        for i in range(n):
            has_gen = bool(m_c[i].any())
            payloads.append(CompressedPayload(
                m_s=m_s[i], m_c=m_c[i], latent=latent[i] if has_gen else None,
                blob=lossless_encode(x[i], m_s[i] & ~m_c[i]),
                bs_class=int(bs_class[i]), hour=int(hour[i]),
                task_id=None if tids is None or self.context.task is None else int(tids[i]),
                k=self.config.k, t=self.config.t, latent_dim=self.config.latent_dim,
            ))
        return payloads, decision

    def decompress_batch(self, payloads):
        """Rebuild windows from payloads; returns an ``(n, D)`` array in [0, 1]."""
        if not payloads:
            return np.zeros((0, self.d))
        for p in payloads:
            if (p.k, p.t) != (self.config.k, self.config.t) or p.latent_dim != self.config.latent_dim:
                raise CompatibilityError(
                    f"payload (K={p.k}, T={p.t}, latent={p.latent_dim}) does not match model "
                    f"(K={self.config.k}, T={self.config.t}, latent={self.config.latent_dim})"
                )
        n = len(payloads)
        bs_class = np.array([p.bs_class for p in payloads])
        hour = np.array([p.hour for p in payloads])
        tids = None
        if self.context.task is not None:
            tids = np.array([0 if p.task_id is None else p.task_id for p in payloads])
        ctx = self.encode_context(bs_class, hour, tids)
        latent = np.empty((n, self.config.latent_dim))
        missing = [i for i, p in enumerate(payloads) if p.latent is None]
        if missing:
            # No generative entries: the receiver runs the encoder on an
            # all-zero input itself (it knows the context).
            zero_ctx = nn.take_rows(ctx.vector, missing)
            local = self.ae.encode(np.zeros((len(missing), self.d)), zero_ctx).data
            latent[missing] = local.astype("<f4")
        for i, p in enumerate(payloads):
            if p.latent is not None:
                latent[i] = p.latent
        x_hat_g = self.ae.decode(latent, ctx.vector, clamp=True).data
        out = np.empty((n, self.d))
        for i, p in enumerate(payloads):
            values = lossless_decode(p.blob, p.lossless_mask)
            out[i] = merge_reconstruction(x_hat_g[i], values, p.m_s, p.m_c)
        return out

    # ------------------------------------------------------------- persistence

    def state(self):
        return {
            "config": self.config.to_dict(),
            "rate_model": None if self.rate_model is None else self.rate_model.to_dict(),
        }

    def save(self, prefix):
        """Write ``<prefix>.ggnz`` (parameters) and ``<prefix>.json`` (configuration)."""
        nn.save_params(f"{prefix}.ggnz", self.params)
        with open(f"{prefix}.json", "w") as fh:
            json.dump(self.state(), fh, indent=1)

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.json") as fh:
            state = json.load(fh)
        model = cls(ModelConfig.from_dict(state["config"]))
        model.params.load_state_dict(nn.load_params(f"{prefix}.ggnz"))
        if state.get("rate_model"):
            model.rate_model = RateModel.from_dict(state["rate_model"])
        return model


def decision_from_choice(choice):
    """Build a :class:`PolicyDecision` from per-entry column indices."""
    choice = np.asarray(choice)
    hard = np.eye(3)[choice]
    m_c = choice == GENERATIVE
    m_s = m_c | (choice == LOSSLESS)
    return PolicyDecision(hard.copy(), hard, m_s, m_c)
