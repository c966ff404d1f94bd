"""Joint training of policy, codec and task heads under sampling and rate budgets.

The loss is the fidelity term plus multiplier-weighted constraint
violations; the multipliers follow projected dual ascent once per batch.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn
from .data.batching import batch_iter, go_targets
from .exceptions import DimensionError, InvalidArgumentError, TrainingError
from .policy import expected_rate, sampling_ratio, soft_rate, soft_sampling_ratio, temperature
from .tasks import TaskSpec, build_target  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

BETA_CAP = 1e3
MODES = ("reconstruction", "goal-oriented")


@dataclass(frozen=True)
class DualState:
    """Lagrange multipliers, their step size and the two budgets.

    ``r_budget=None`` leaves the rate unconstrained.
    """

    beta_s: float = 0.0
    beta_c: float = 0.0
    lam: float = 0.05
    s_budget: float = 1.0
    r_budget: float | None = None
    beta_cap: float = BETA_CAP


def dual_update(dual, s_est, r_est):
    """``beta <- [beta + lam * (estimate - budget)]_+`` for both constraints."""
    beta_s = max(0.0, dual.beta_s + dual.lam * (s_est - dual.s_budget))
    beta_c = dual.beta_c
    if dual.r_budget is not None:
        beta_c = max(0.0, dual.beta_c + dual.lam * (r_est - dual.r_budget))
    if beta_s > dual.beta_cap or beta_c > dual.beta_cap:
        warnings.warn(
            f"dual multiplier hit the cap {dual.beta_cap:g}; the budgets may be infeasible",
            stacklevel=2,
        )
        beta_s, beta_c = min(beta_s, dual.beta_cap), min(beta_c, dual.beta_cap)
    return replace(dual, beta_s=beta_s, beta_c=beta_c)


def constraint_penalty(s_est, r_est, dual):
    penalty = dual.beta_s * (s_est - dual.s_budget)
    if dual.r_budget is not None:
        penalty = penalty + dual.beta_c * (r_est - dual.r_budget)
    return penalty


def reconstruction_loss(x, x_hat, s_est, r_est, dual):
    """Mean squared error plus the weighted constraint violations."""
    x = nn.tensor.as_tensor(x)
    x_hat = nn.tensor.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"reconstruction shape {x_hat.shape} != input shape {x.shape}")
    mse = nn.square(x - x_hat).mean()
    return mse + constraint_penalty(s_est, r_est, dual)


@dataclass
class TrainConfig:
    """Loop settings.

    ``policy_lr_scale`` slows the policy relative to the codec so the
    multipliers can track the budgets; ``lr_final`` is the fraction of ``lr``
    reached at the end of the cosine decay.
    """

    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    dual_step: float = 0.1
    tau_start: float = 1.0
    tau_end: float = 0.1
    mode: str = "reconstruction"
    seed: int = 0
    policy_lr_scale: float = 0.3
    lr_final: float = 0.05

    def __post_init__(self):
        if self.mode == "go":
            self.mode = "goal-oriented"
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("epochs", "batch_size", "lr", "tau_start", "tau_end", "policy_lr_scale"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.dual_step < 0:
            raise InvalidArgumentError("dual_step must be non-negative")
        if not 0 < self.lr_final <= 1:
            raise InvalidArgumentError("lr_final must lie in (0, 1]")

    def lr_at(self, epoch, n_epochs=None):
        n = self.epochs if n_epochs is None else n_epochs
        frac = epoch / max(n - 1, 1)
        return self.lr * (self.lr_final + (1 - self.lr_final) * 0.5 * (1 + math.cos(math.pi * frac)))


def budget_probs(codec, s_budget, r_budget, rate_model):
    """Per-entry (skip, generative, lossless) probabilities that meet both budgets.

    Used to start the policy on the constraint surface, so the multipliers
    only have to correct small deviations.
    """
    s = min(max(float(s_budget), 0.0), 1.0)
    if codec == "generative-only":
        lossless = 0.0
    elif codec == "lossless-only":
        lossless = s
    elif r_budget is None or rate_model is None:
        lossless = s / 2
    else:
        lossless = (r_budget - rate_model.r_ge) / rate_model.r_lc
        lossless = min(max(lossless, 0.01 * s), 0.99 * s)
    return np.array([1.0 - s, s - lossless, lossless])


def start_at_budget(model, dual):
    model.init_policy_bias(budget_probs(model.codec, dual.s_budget, dual.r_budget,
                                        model.rate_model))


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    fidelity: float
    sr: float
    rate: float
    beta_s: float
    beta_c: float
    tau: float
    task_mae: dict = field(default_factory=dict)
    beta_trajectory: list = field(default_factory=list)

    def log_line(self, task_ids=()):
        cols = [self.epoch, self.loss, self.sr, self.rate, self.beta_s, self.beta_c]
        cols += [self.task_mae.get(t, float("nan")) for t in task_ids]
        return "\t".join(str(c) if isinstance(c, int) else f"{c:.10g}" for c in cols)


def log_header(task_ids=()):
    return "\t".join(["epoch", "loss", "sr", "rate", "beta_s", "beta_c",
                      *[f"mae_task{t}" for t in task_ids]])


def _check_finite(loss, batch_index):
    if not math.isfinite(float(loss.data)):
        raise TrainingError(f"non-finite loss at batch {batch_index}")


def _step(model, optimizer, loss, batch_index):
    _check_finite(loss, batch_index)
    model.params.zero_grad()
    grads = nn.backward(loss, optimizer.params)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} at batch {batch_index}")
    optimizer.step(grads)


def _hard_estimates(model, decision):
    s_hard = sampling_ratio(decision.m_s)
    r_hard = expected_rate(decision.m_s, decision.m_c, model.rate_model)
    return s_hard, r_hard


def train_epoch(model, batches, optimizer, dual, config, tau, rng, epoch=0):
    """One pass of reconstruction training; returns ``(metrics, dual)``."""
    sums = np.zeros(4)
    n_seen = 0
    trajectory = []
    for b, batch in enumerate(batches):
        ctx = model.encode_context(batch.bs_class, batch.hour)
        x_hat, probs, decision = model.forward_train(batch.x, ctx, tau, rng)
        s_soft = soft_sampling_ratio(probs)
        r_soft = soft_rate(probs, model.rate_model)
        mse = nn.square(nn.Tensor(batch.x) - x_hat).mean()
        loss = mse + constraint_penalty(s_soft, r_soft, dual)
        _step(model, optimizer, loss, b)
        s_hard, r_hard = _hard_estimates(model, decision)
        dual = dual_update(dual, s_hard, r_hard)
        trajectory.append((dual.beta_s, dual.beta_c))
        n = len(batch)
        sums += n * np.array([float(loss.data), float(mse.data), s_hard, r_hard])
        n_seen += n
    sums /= max(n_seen, 1)
    metrics = EpochMetrics(epoch, *sums, dual.beta_s, dual.beta_c, tau,
                           beta_trajectory=trajectory)
    return metrics, dual


def reconstruct_stack(model, batch, tau, rng, with_task=True):
    """Reconstruct every lookback window of a GO batch; returns ``(stack, probs, decision)``.

    ``stack`` is ``B x (L*D)``: the L reconstructed windows side by side.
    """
    b, n_look, d = batch.lookback.shape
    x = batch.lookback.reshape(b * n_look, d)
    rep = lambda a: np.repeat(np.asarray(a), n_look)  # noqa: E731
    tids = rep(batch.task_id) if with_task else None
    ctx = model.encode_context(rep(batch.bs_class), rep(batch.hour), tids)
    x_hat, probs, decision = model.forward_train(x, ctx, tau, rng)
    return nn.reshape(x_hat, (b, n_look * d)), probs, decision


def task_loss(model, stack, batch, target_scale, training=True, rng=None):
    """Sum over tasks of the per-task normalised mean squared error."""
    preds = model.predict_tasks(stack, batch.task_id, training=training, rng=rng)
    total = None
    maes = {}
    for tid, (rows, pred) in preds.items():
        y = batch.targets[tid]
        err = nn.square(pred - y).mean() * (1.0 / target_scale[tid] ** 2)
        total = err if total is None else total + err
        maes[tid] = float(np.abs(pred.data - y).mean())
    return total, maes


def go_train_epoch(model, batches, optimizer, dual, config, tau, rng, target_scale, epoch=0,
                   train_codec=True, with_task=True):
    """One pass of goal-oriented training.

    With ``train_codec=False`` the policy and autoencoder are frozen (only the
    heads in ``optimizer`` move and the multipliers are left alone).
    """
    sums = np.zeros(4)
    n_seen = 0
    mae_sum, mae_n = {}, {}
    trajectory = []
    for b, batch in enumerate(batches):
        stack, probs, decision = reconstruct_stack(model, batch, tau, rng, with_task)
        if not train_codec:
            stack = nn.stop_gradient(stack)
        fidelity, maes = task_loss(model, stack, batch, target_scale, training=True, rng=rng)
        loss = fidelity
        if train_codec:
            s_soft = soft_sampling_ratio(probs)
            r_soft = soft_rate(probs, model.rate_model)
            loss = fidelity + constraint_penalty(s_soft, r_soft, dual)
        _step(model, optimizer, loss, b)
        s_hard, r_hard = _hard_estimates(model, decision)
        if train_codec:
            dual = dual_update(dual, s_hard, r_hard)
        trajectory.append((dual.beta_s, dual.beta_c))
        n = len(batch)
        sums += n * np.array([float(loss.data), float(fidelity.data), s_hard, r_hard])
        n_seen += n
        for tid, v in maes.items():
            k = len(batch.rows[tid])
            mae_sum[tid] = mae_sum.get(tid, 0.0) + v * k
            mae_n[tid] = mae_n.get(tid, 0) + k
    sums /= max(n_seen, 1)
    task_mae = {t: mae_sum[t] / mae_n[t] for t in sorted(mae_sum)}
    metrics = EpochMetrics(epoch, *sums, dual.beta_s, dual.beta_c, tau, task_mae, trajectory)
    return metrics, dual


def target_scales(samples, tasks):
    """Per-task training-set standard deviation of the target (floored)."""
    out = {}
    for task in tasks:
        y = go_targets(samples, task)
        out[task.task_id] = max(float(y.std()), 1e-3)
    return out


class Trainer:
    """Runs the epoch loop, anneals the temperature and records metrics."""

    def __init__(self, model, config, dual, log_path=None, checkpoint_prefix=None,
                 checkpoint_every=0):
        self.model = model
        self.config = config
        self.dual = dual
        self.log_path = log_path
        self.checkpoint_prefix = checkpoint_prefix
        self.checkpoint_every = int(checkpoint_every)
        self.history = []
        self.optimizer = nn.Adam(model.params, lr=config.lr,
                                 lr_scale={"policy": config.policy_lr_scale})
        self.rng = np.random.default_rng(config.seed)

    def _checkpoint(self, epoch, stage):
        every = self.checkpoint_every
        if self.checkpoint_prefix is None or every <= 0 or (epoch + 1) % every:
            return
        nn.save_params(f"{self.checkpoint_prefix}.{stage}{epoch + 1:03d}.ggnz", self.model.params)

    def _log(self, metrics, task_ids):
        self.history.append(metrics)
        if self.log_path is None:
            return
        mode = "a" if len(self.history) > 1 else "w"
        with open(self.log_path, mode) as fh:
            if mode == "w":
                fh.write(log_header(task_ids) + "\n")
            fh.write(metrics.log_line(task_ids) + "\n")

    def fit_reconstruction(self, windows):
        cfg = self.config
        for epoch in range(cfg.epochs):
            tau = temperature(epoch, cfg.epochs, cfg.tau_start, cfg.tau_end)
            self.optimizer.lr = cfg.lr_at(epoch)
            batches = batch_iter(windows, "reconstruction", cfg.batch_size,
                                 seed=cfg.seed * 100003 + epoch)
            metrics, self.dual = train_epoch(self.model, batches, self.optimizer, self.dual,
                                             cfg, tau, self.rng, epoch)
            self._log(metrics, ())
            self._checkpoint(epoch, "epoch")
            log.debug("epoch %d loss %.5f sr %.3f rate %.3f", epoch, metrics.loss, metrics.sr,
                      metrics.rate)
        return self.history

    def fit_goal_oriented(self, samples, tasks, train_codec=True, with_task=True, epochs=None,
                          optimizer=None):
        cfg = self.config
        scales = target_scales(samples, tasks)
        optimizer = optimizer or self.optimizer
        epochs = cfg.epochs if epochs is None else epochs
        task_ids = [t.task_id for t in tasks]
        for epoch in range(epochs):
            tau = temperature(epoch, epochs, cfg.tau_start, cfg.tau_end)
            optimizer.lr = cfg.lr_at(epoch, epochs)
            batches = batch_iter(samples, "goal-oriented", cfg.batch_size, tasks,
                                 seed=cfg.seed * 100003 + epoch)
            metrics, self.dual = go_train_epoch(
                self.model, batches, optimizer, self.dual, cfg, tau, self.rng, scales, epoch,
                train_codec=train_codec, with_task=with_task,
            )
            self._log(metrics, task_ids)
            self._checkpoint(epoch, "go_epoch")
        return self.history


def config_dict(config):
    return asdict(config)
