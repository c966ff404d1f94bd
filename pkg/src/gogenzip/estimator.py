"""scikit-learn style front ends.

:class:`GenZipCompressor` learns a policy + hybrid codec from windows and
turns windows into wire containers (``transform``) and back
(``inverse_transform``). :class:`GoalOrientedGenZip` adds forecasting heads
trained end to end.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import nn
from .codec import calibrate_rate_model, pack_container, rate_budget_for_cr, unpack_container
from .data.batching import GOSampleSet
from .data.dataset import WindowSet
from .exceptions import DataValidationError, InvalidArgumentError
from .model import GenZipModel, ModelConfig
from .training import DualState, TrainConfig, Trainer, start_at_budget


def check_windows(X, k=None, t=None):
    """Validate windows as ``(n, K, T)`` floats in [0, 1]; 2-D input needs ``k`` and ``t``."""
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim == 2:
        if k is None or t is None or X.shape[1] != k * t:
            raise DataValidationError(
                f"2-D input needs K*T columns; got {X.shape[1]} (K={k}, T={t})"
            )
        X = X.reshape(-1, k, t)
    if X.ndim != 3:
        raise DataValidationError(f"windows must be (n, K, T); got shape {X.shape}")
    if (k is not None and X.shape[1] != k) or (t is not None and X.shape[2] != t):
        raise DataValidationError(f"windows have shape {X.shape[1:]}, expected ({k}, {t})")
    if X.min() < 0.0 or X.max() > 1.0:
        raise DataValidationError("windows must be normalised to [0, 1]")
    return X


def check_context(values, n, upper, name):
    """Context indices as an int array of length ``n`` in ``[0, upper)``; None means zeros."""
    if values is None:
        return np.zeros(n, dtype=np.int64)
    arr = np.asarray(values)
    if arr.ndim == 0:
        arr = np.full(n, arr)
    if arr.shape != (n,):
        raise DataValidationError(f"{name} must have length {n}, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise DataValidationError(f"{name} must hold integers")
        arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= upper):
        raise DataValidationError(f"{name} values must lie in [0, {upper})")
    return arr.astype(np.int64)


class GenZipCompressor(TransformerMixin, BaseEstimator):
    """Learned sampling + hybrid compression of ``K x T`` telemetry windows.

    The rate budget is given as a target compression ratio ``cr`` or a
    normalised ``rate`` (None leaves it unconstrained).
    """

    def __init__(self, codec="hybrid", policy="adaptive", sr=0.4, cr=None, rate=None,
                 latent_dim=32, n_classes=4, epochs=30, batch_size=32, lr=1e-3, dual_step=0.1,
                 policy_lr_scale=0.3, lr_final=0.05, tau_start=1.0, tau_end=0.1,
                 deterministic=False, random_state=0):
        self.codec = codec
        self.policy = policy
        self.sr = sr
        self.cr = cr
        self.rate = rate
        self.latent_dim = latent_dim
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dual_step = dual_step
        self.policy_lr_scale = policy_lr_scale
        self.lr_final = lr_final
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.deterministic = deterministic
        self.random_state = random_state

    def _rate_budget(self, d):
        if self.cr is not None and self.rate is not None:
            raise InvalidArgumentError("give either cr or rate, not both")
        if self.cr is not None:
            return rate_budget_for_cr(self.cr, d)
        return self.rate

    def fit(self, X, y=None, *, bs_class=None, hour=None):
        X = check_windows(X)
        n, k, t = X.shape
        bs_class = check_context(bs_class, n, self.n_classes, "bs_class")
        hour = check_context(hour, n, 24, "hour")
        seed = int(self.random_state or 0)
        model = GenZipModel(ModelConfig(k=k, t=t, n_classes=self.n_classes,
                                        latent_dim=self.latent_dim, codec=self.codec,
                                        policy=self.policy, seed=seed))
        model.rate_model = calibrate_rate_model(X.reshape(n, -1), self.latent_dim)
        dual = DualState(lam=self.dual_step, s_budget=self.sr,
                         r_budget=self._rate_budget(k * t))
        start_at_budget(model, dual)
        config = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                             dual_step=self.dual_step, tau_start=self.tau_start,
                             tau_end=self.tau_end, seed=seed,
                             policy_lr_scale=self.policy_lr_scale, lr_final=self.lr_final)
        trainer = Trainer(model, config, dual)
        windows = WindowSet(X, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
                            bs_class, hour)
        trainer.fit_reconstruction(windows)
        self.model_ = model
        self.dual_ = trainer.dual
        self.history_ = trainer.history
        self.n_features_in_ = k * t
        self.window_shape_ = (k, t)
        return self

    def _rng(self):
        return np.random.default_rng(int(self.random_state or 0) + 7919)

    def transform(self, X, *, bs_class=None, hour=None):
        """Containers (``bytes``) for each window."""
        check_is_fitted(self, "model_")
        k, t = self.window_shape_
        X = check_windows(X, k, t)
        n = X.shape[0]
        bs_class = check_context(bs_class, n, self.n_classes, "bs_class")
        hour = check_context(hour, n, 24, "hour")
        payloads, _ = self.model_.compress_batch(X.reshape(n, -1), bs_class, hour,
                                                 deterministic=self.deterministic,
                                                 rng=self._rng())
        return [pack_container(p) for p in payloads]

    def fit_transform(self, X, y=None, *, bs_class=None, hour=None):
        return self.fit(X, bs_class=bs_class, hour=hour).transform(X, bs_class=bs_class,
                                                                    hour=hour)

    def inverse_transform(self, containers):
        """Windows ``(n, K, T)`` rebuilt from containers."""
        check_is_fitted(self, "model_")
        payloads = [unpack_container(c) for c in containers]
        k, t = self.window_shape_
        return self.model_.decompress_batch(payloads).reshape(-1, k, t)

    def score(self, X, y=None, *, bs_class=None, hour=None):
        """Negative mean absolute reconstruction error through the wire path."""
        X_hat = self.inverse_transform(self.transform(X, bs_class=bs_class, hour=hour))
        return -float(np.abs(X_hat - check_windows(X)).mean())

    def compression_ratio(self, X, *, bs_class=None, hour=None):
        containers = self.transform(X, bs_class=bs_class, hour=hour)
        return X.shape[0] * self.n_features_in_ * 2 / sum(len(c) for c in containers)


class GoalOrientedGenZip(BaseEstimator):
    """Compression with forecasting heads, trained on a prepared dataset.

    ``variant="go-e2e"`` trains the policy and codec on the task losses;
    ``"recon-based"`` trains them on reconstruction and only fits the heads.
    """

    def __init__(self, variant="go-e2e", codec="hybrid", policy="adaptive", sr=0.4, cr=2.9,
                 epochs=30, go_epochs=8, lookback=3, horizon=3, deterministic=False,
                 random_state=0):
        self.variant = variant
        self.codec = codec
        self.policy = policy
        self.sr = sr
        self.cr = cr
        self.epochs = epochs
        self.go_epochs = go_epochs
        self.lookback = lookback
        self.horizon = horizon
        self.deterministic = deterministic
        self.random_state = random_state

    def _config(self):
        from .config import ExperimentConfig

        return ExperimentConfig(mode="go", codec=self.codec, policy=self.policy, sr=self.sr,
                                cr=self.cr, epochs=self.epochs, go_epochs=self.go_epochs,
                                lookback=self.lookback, horizon=self.horizon,
                                deterministic=self.deterministic,
                                seed=int(self.random_state or 0))

    def fit(self, dataset, y=None):
        from .experiments import train_goal_oriented, train_reconstruction

        cfg = self._config()
        base = train_reconstruction(cfg.replace(mode="recon"), dataset)
        run = train_goal_oriented(cfg, base, self.variant, dataset)
        self.model_ = run.model
        self.history_ = run.history
        self.config_ = cfg
        return self

    def predict(self, samples, task_id):
        """Forecasts of task ``task_id`` for a :class:`GOSampleSet`, via the wire path."""
        from .experiments import _wire_roundtrip

        check_is_fitted(self, "model_")
        if not isinstance(samples, GOSampleSet):
            raise DataValidationError("predict expects a GOSampleSet")
        if task_id not in self.model_.heads:
            raise InvalidArgumentError(f"unknown task {task_id}")
        n, n_look = samples.lookback.shape[:2]
        flat = samples.lookback.reshape(n * n_look, -1)
        rng = np.random.default_rng(self.config_.seed + 7919)
        x_hat, _, _, _ = _wire_roundtrip(
            self.model_, flat, np.repeat(samples.bs_class, n_look),
            np.repeat(samples.hour, n_look), np.full(len(flat), task_id),
            self.deterministic, rng,
        )
        return self.model_.heads[task_id](nn.Tensor(x_hat.reshape(n, -1)), training=False).data

    def score(self, dataset, y=None, split="test"):
        """Negative mean per-task MAE on ``split``."""
        from .experiments import evaluate_tasks

        check_is_fitted(self, "model_")
        row = evaluate_tasks(self.model_, self.config_, dataset, split)
        return -float(np.mean(list(row.task_mae.values())))
