import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gogenzip import nn
from gogenzip.codec.rate import RateModel
from gogenzip.data import GOSampleSet, WindowSet, batch_iter
from gogenzip.exceptions import (
    ContractError,
    DimensionError,
    InvalidArgumentError,
    TrainingError,
)
from gogenzip.model import GenZipModel, ModelConfig
from gogenzip.tasks import TaskSpec, build_target, default_tasks
from gogenzip.training import (
    DualState,
    TrainConfig,
    Trainer,
    budget_probs,
    dual_update,
    go_train_epoch,
    log_header,
    reconstruct_stack,
    reconstruction_loss,
    start_at_budget,
    target_scales,
    task_loss,
    train_epoch,
)

from oracles import task_target_reference

K, T = 4, 24
D = K * T
RATE = RateModel(d=D, latent_dim=4, r_ge=0.05, r_lc=0.6, n_calibration=100)


def small_model(tasks=(), **kw):
    cfg = dict(k=K, t=T, n_classes=2, latent_dim=4, emb_dim=4, policy_hidden=16,
               ae_hidden=(16,), head_sizes=(8,), tasks=list(tasks))
    cfg.update(kw)
    model = GenZipModel(ModelConfig(**cfg))
    model.rate_model = RATE
    return model


def windows(n=96, seed=0):
    rng = np.random.default_rng(seed)
    base = np.sin(np.linspace(0, 2 * np.pi, T))[None, None] * 0.3 + 0.5
    x = np.clip(base + 0.05 * rng.normal(size=(n, K, T)), 0, 1)
    return WindowSet(x, np.arange(n) % 8, np.zeros(n, int), np.arange(n) % 2, np.zeros(n, int))


def go_samples(n=48, k=K, lookback=2, horizon=3, seed=0):
    rng = np.random.default_rng(seed)
    return GOSampleSet(rng.random((n, lookback, k, T)), rng.random((n, horizon, k)),
                       np.arange(n), np.zeros(n, int), np.arange(n) % 2, np.arange(n) % 24)


# ----------------------------------------------------------- loss and duals

def test_loss_zero_when_exact_and_on_budget():
    x = np.random.default_rng(0).random((3, 5))
    dual = DualState(beta_s=1.0, beta_c=2.0, s_budget=0.4, r_budget=0.2)
    assert reconstruction_loss(x, x, 0.4, 0.2, dual).item() == 0.0


def test_loss_without_multipliers_is_mse():
    x = np.zeros((2, 4))
    x_hat = np.full((2, 4), 0.5)
    dual = DualState(s_budget=0.1, r_budget=0.1)
    assert reconstruction_loss(x, x_hat, 0.9, 0.9, dual).item() == pytest.approx(0.25)


def test_loss_formula_example():
    x = np.zeros((1, 1))
    x_hat = np.full((1, 1), 0.1)  # MSE 0.01
    dual = DualState(beta_s=2.0, beta_c=0.0, s_budget=0.3, r_budget=0.5)
    assert reconstruction_loss(x, x_hat, 0.4, 0.9, dual).item() == pytest.approx(0.21)


def test_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        reconstruction_loss(np.zeros((2, 3)), np.zeros((3, 2)), 0, 0, DualState())


def test_dual_update_examples():
    d = dual_update(DualState(beta_s=0.0, lam=0.1, s_budget=0.2), 0.5, 0.0)
    assert d.beta_s == pytest.approx(0.03)
    d = dual_update(DualState(beta_s=0.01, lam=0.1, s_budget=1.0), 0.0, 0.0)
    assert d.beta_s == 0.0
    d0 = DualState(beta_s=0.7, beta_c=0.2, lam=0.1, s_budget=0.4, r_budget=0.25)
    d = dual_update(d0, 0.4, 0.25)
    assert (d.beta_s, d.beta_c) == (0.7, 0.2)


def test_dual_update_without_rate_budget_leaves_beta_c():
    d = dual_update(DualState(beta_c=0.3, lam=1.0), 0.0, 5.0)
    assert d.beta_c == 0.3


def test_dual_cap_warns():
    with pytest.warns(UserWarning, match="cap"):
        d = dual_update(DualState(beta_s=999.99, lam=1.0, s_budget=0.0), 1.0, 0.0)
    assert d.beta_s == 1e3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 2)), min_size=1, max_size=30),
       st.floats(0, 5))
def test_multipliers_never_negative(estimates, lam):
    d = DualState(lam=lam, s_budget=0.5, r_budget=0.3)
    for s, r in estimates:
        d = dual_update(d, s, r)
        assert d.beta_s >= 0 and d.beta_c >= 0


def test_budget_probs_meet_both_budgets():
    p = budget_probs("hybrid", 0.4, 0.2, RATE)
    assert p.sum() == pytest.approx(1.0)
    assert 1 - p[0] == pytest.approx(0.4)
    # rate = r_ge (latent always sent) + r_lc * lossless fraction
    assert RATE.r_ge + RATE.r_lc * p[2] == pytest.approx(0.2)
    assert budget_probs("generative-only", 0.4, 0.2, RATE)[2] == 0
    assert budget_probs("lossless-only", 0.4, 0.2, RATE)[1] == 0


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("field,value", [
    ("epochs", 0), ("batch_size", -1), ("lr", 0.0), ("tau_end", 0.0), ("dual_step", -0.1),
    ("lr_final", 0.0), ("mode", "bogus"),
])
def test_train_config_rejects(field, value):
    with pytest.raises(InvalidArgumentError):
        TrainConfig(**{field: value})


def test_train_config_mode_alias_and_lr_schedule():
    cfg = TrainConfig(mode="go", epochs=11, lr=1e-2, lr_final=0.1)
    assert cfg.mode == "goal-oriented"
    assert cfg.lr_at(0) == pytest.approx(1e-2)
    assert cfg.lr_at(10) == pytest.approx(1e-3)
    assert cfg.lr_at(5) == pytest.approx(0.55e-2)
    lrs = [cfg.lr_at(e) for e in range(11)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


# ------------------------------------------------------------- train epochs

def recon_batches(ws, batch_size=32, seed=0):
    return list(batch_iter(ws, "reconstruction", batch_size, seed=seed))


@pytest.mark.filterwarnings("ignore:invalid value")
def test_nan_loss_names_batch():
    model = small_model()
    ws = windows(64)
    ws.x[40, 0, 0] = np.nan
    opt = nn.Adam(model.params, lr=1e-3)
    batches = recon_batches(ws, batch_size=32, seed=None)
    bad = next(i for i, b in enumerate(batches) if np.isnan(b.x).any())
    with pytest.raises(TrainingError, match=f"batch {bad}"):
        train_epoch(model, batches, opt, DualState(), TrainConfig(), 1.0,
                    np.random.default_rng(0))


def test_zero_dual_step_freezes_multipliers():
    model = small_model()
    opt = nn.Adam(model.params, lr=1e-3)
    dual = DualState(beta_s=0.25, beta_c=0.5, lam=0.0, s_budget=0.1, r_budget=0.05)
    metrics, out = train_epoch(model, recon_batches(windows()), opt, dual, TrainConfig(), 1.0,
                               np.random.default_rng(0))
    assert (out.beta_s, out.beta_c) == (0.25, 0.5)
    assert all(b == (0.25, 0.5) for b in metrics.beta_trajectory)


def test_zero_multipliers_train_as_plain_autoencoder():
    model = small_model(policy="fixed")
    model.init_policy_bias([1e-4, 1.0, 1e-4])  # (almost) always generative
    opt = nn.Adam(model.params, lr=1e-2, lr_scale={"policy": 1e-9})
    dual = DualState(lam=0.0)
    ws = windows(96)
    first = None
    for epoch in range(15):
        m, dual = train_epoch(model, recon_batches(ws, seed=epoch), opt, dual, TrainConfig(), 1.0,
                              np.random.default_rng(epoch), epoch)
        first = m.fidelity if first is None else first
        assert m.loss == pytest.approx(m.fidelity)
    assert m.fidelity < 0.5 * first


def fit(seed, epochs=3, **kw):
    model = small_model(seed=seed)
    cfg = TrainConfig(epochs=epochs, batch_size=32, lr=3e-3, seed=seed, **kw)
    dual = DualState(lam=0.1, s_budget=0.4, r_budget=0.3)
    start_at_budget(model, dual)
    trainer = Trainer(model, cfg, dual)
    trainer.fit_reconstruction(windows(96))
    return trainer


def test_training_is_deterministic():
    a, b = fit(3), fit(3)
    rows_a = [m.log_line() for m in a.history]
    rows_b = [m.log_line() for m in b.history]
    assert rows_a == rows_b
    assert nn.dumps_params(a.model.params) == nn.dumps_params(b.model.params)
    assert rows_a != [m.log_line() for m in fit(4).history]


def test_full_budget_samples_everything():
    # uniform start (SR 2/3); nothing but the fidelity term pushes SR up
    model = small_model()
    cfg = TrainConfig(epochs=25, batch_size=32, lr=3e-2, policy_lr_scale=1.0, seed=0)
    dual = DualState(lam=0.1, s_budget=1.0, r_budget=1e6)
    trainer = Trainer(model, cfg, dual)
    trainer.fit_reconstruction(windows(96))
    assert trainer.history[-1].sr >= 0.98


def test_multipliers_nonnegative_throughout_training():
    trainer = fit(0, epochs=2)
    for m in trainer.history:
        assert all(bs >= 0 and bc >= 0 for bs, bc in m.beta_trajectory)


# -------------------------------------------------------------------- tasks

def test_build_target_examples():
    assert build_target([1, 2, 3], TaskSpec(0, 0, phi="mean")).tolist() == [2.0]
    assert build_target([0.3, 0.1, 0.2], TaskSpec(0, 0, phi="min")).tolist() == [0.1]
    assert build_target([0.3, 0.1, 0.2], TaskSpec(0, 0, phi="identity")).tolist() == [0.3, 0.1, 0.2]


def test_build_target_skips_short_or_missing_horizon():
    assert build_target([1.0, 2.0], TaskSpec(0, 0, horizon=3)) is None
    assert build_target([1.0, np.nan, 2.0], TaskSpec(0, 0)) is None


@pytest.mark.parametrize("phi", ["identity", "mean", "min", "max"])
def test_build_target_matches_reference(phi):
    future = np.random.default_rng(1).random((5, K))
    task = TaskSpec(0, 2, horizon=4, phi=phi)
    got = build_target(future[:, 2], task)
    np.testing.assert_allclose(got, task_target_reference(future.tolist(), 2, 4, phi))


def test_task_spec_invariants():
    with pytest.raises(InvalidArgumentError):
        TaskSpec(0, 0, lookback=0)
    with pytest.raises(InvalidArgumentError):
        TaskSpec(0, 0, horizon=0)
    with pytest.raises(InvalidArgumentError):
        TaskSpec(0, 0, phi="median")
    with pytest.raises(InvalidArgumentError):
        TaskSpec(0, K).validate(K)
    assert TaskSpec(0, 0, horizon=5, phi="identity").out_dim == 5
    assert TaskSpec(0, 0, horizon=5, phi="max").out_dim == 1


TASKS = [TaskSpec(0, 1, lookback=2, horizon=3, phi="identity"),
         TaskSpec(1, 3, lookback=2, horizon=3, phi="mean")]


def test_head_output_dims_and_eval_determinism():
    model = small_model(TASKS)
    stack = np.random.default_rng(0).random((4, 2 * D))
    tids = np.array([0, 1, 0, 1])
    a = model.predict_tasks(stack, tids)
    assert a[0][1].shape == (2, 3) and a[1][1].shape == (2, 1)
    b = model.predict_tasks(stack, tids)
    for t in (0, 1):
        np.testing.assert_array_equal(a[t][1].data, b[t][1].data)
    noisy = model.predict_tasks(stack, tids, training=True, rng=np.random.default_rng(1))
    assert not np.array_equal(noisy[0][1].data, a[0][1].data)


def test_wrong_lookback_is_a_contract_error():
    model = small_model(TASKS)
    with pytest.raises(ContractError, match="expects 2 windows"):
        model.predict_tasks(np.zeros((2, 3 * D)), np.array([0, 1]))


def test_task_loss_reaches_policy_logits():
    model = small_model(TASKS)
    samples = go_samples()
    batch = next(batch_iter(samples, "goal-oriented", 8, TASKS, seed=0))
    stack, _, _ = reconstruct_stack(model, batch, 0.5, np.random.default_rng(0))
    loss, _ = task_loss(model, stack, batch, target_scales(samples, TASKS), training=False)
    grads = nn.backward(loss, model.params)
    policy_grad = sum(np.abs(g).sum() for n, g in grads.items() if n.startswith("policy"))
    ae_grad = sum(np.abs(g).sum() for n, g in grads.items() if n.startswith(("encoder", "decoder")))
    assert policy_grad > 0 and ae_grad > 0


def test_six_task_epoch_runs():
    tasks = default_tasks(lookback=1, horizon=3)
    k = 34
    model = small_model(tasks, k=k)
    samples = go_samples(n=24, k=k, lookback=1)
    opt = nn.Adam(model.params, lr=1e-3)
    dual = DualState(lam=0.1, s_budget=0.4, r_budget=0.3)
    metrics, dual = go_train_epoch(model, batch_iter(samples, "goal-oriented", 12, tasks, seed=0),
                                   opt, dual, TrainConfig(mode="go"), 1.0,
                                   np.random.default_rng(0), target_scales(samples, tasks))
    assert sorted(metrics.task_mae) == list(range(6))
    assert all(math.isfinite(v) for v in metrics.task_mae.values())
    assert 0 <= metrics.sr <= 1


def test_frozen_codec_moves_only_heads():
    model = small_model(TASKS)
    before = {n: p.data.copy() for n, p in model.params.items()}
    opt = nn.Adam(model.params.subset("head"), lr=1e-2)
    samples = go_samples()
    dual = DualState(beta_s=0.3, lam=0.5, s_budget=0.1)
    _, out = go_train_epoch(model, batch_iter(samples, "goal-oriented", 8, TASKS, seed=0), opt,
                            dual, TrainConfig(mode="go"), 1.0, np.random.default_rng(0),
                            target_scales(samples, TASKS), train_codec=False)
    assert out == dual
    for n, p in model.params.items():
        changed = not np.array_equal(before[n], p.data)
        assert changed == n.startswith("head"), n


# ------------------------------------------------------- logs, checkpoints

def test_log_file_is_tab_separated(tmp_path):
    model = small_model(TASKS)
    log = tmp_path / "metrics.tsv"
    cfg = TrainConfig(epochs=2, batch_size=8, mode="go")
    trainer = Trainer(model, cfg, DualState(s_budget=0.5, r_budget=0.3), log_path=str(log))
    trainer.fit_goal_oriented(go_samples(), TASKS)
    lines = log.read_text().splitlines()
    assert lines[0] == log_header([0, 1])
    assert lines[0].split("\t")[:6] == ["epoch", "loss", "sr", "rate", "beta_s", "beta_c"]
    assert len(lines) == 3
    assert all(len(line.split("\t")) == 8 for line in lines)
    assert lines[1].split("\t")[0] == "0"


def test_periodic_checkpoints(tmp_path):
    model = small_model()
    cfg = TrainConfig(epochs=4, batch_size=32)
    prefix = str(tmp_path / "model")
    trainer = Trainer(model, cfg, DualState(), checkpoint_prefix=prefix, checkpoint_every=2)
    trainer.fit_reconstruction(windows(64))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["model.epoch002.ggnz", "model.epoch004.ggnz"]
    saved = nn.load_params(str(tmp_path / "model.epoch004.ggnz"))
    assert nn.dumps_params(saved) == nn.dumps_params(model.params)


def test_no_warnings_in_a_normal_run():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit(1, epochs=1)
