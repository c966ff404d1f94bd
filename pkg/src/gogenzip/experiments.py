"""Train, evaluate, sweep and compare runs described by :class:`ExperimentConfig`."""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .codec import calibrate_rate_model, pack_container, unpack_container
from .codec.rate import MIN_CALIBRATION_WINDOWS
from .config import ExperimentConfig
from .data import (
    extract_go_samples,
    extract_windows,
    go_targets,
    load_csv,
    prepare,
    synth_generate,
)
from .exceptions import CompatibilityError, DataValidationError
from .model import GenZipModel, ModelConfig
from .policy import expected_rate, hard_decode, mask_grid, sampling_ratio
from .tasks import default_tasks
from .training import DualState, TrainConfig, Trainer, start_at_budget

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 7919
_DATA_CACHE = {}


# --------------------------------------------------------------------- data

def load_dataset(cfg):
    """Normalised, clustered dataset for ``cfg`` (cached per process)."""
    key = (cfg.data, cfg.synth_seed, cfg.n_bs, cfg.n_days, cfg.n_classes)
    if key not in _DATA_CACHE:
        if cfg.data == "synth":
            raw = synth_generate(seed=cfg.synth_seed, n_bs=cfg.n_bs, n_days=cfg.n_days,
                                 n_classes=cfg.n_classes)
        else:
            raw = load_csv(cfg.data)
        _DATA_CACHE[key] = prepare(raw, n_classes=cfg.n_classes, seed=cfg.synth_seed)
    return _DATA_CACHE[key]


def _train_config(cfg, mode="reconstruction", epochs=None, batch_size=None):
    return TrainConfig(
        epochs=cfg.epochs if epochs is None else epochs,
        batch_size=cfg.batch_size if batch_size is None else batch_size,
        lr=cfg.lr, dual_step=cfg.dual_step, tau_start=cfg.tau_start, tau_end=cfg.tau_end,
        mode=mode, seed=cfg.seed, policy_lr_scale=cfg.policy_lr_scale, lr_final=cfg.lr_final,
    )


# ----------------------------------------------------------------- training

def _checkpointing(cfg, log_path):
    if log_path is None or not cfg.checkpoint_every:
        return {}
    return {"checkpoint_prefix": os.path.join(os.path.dirname(log_path), "model"),
            "checkpoint_every": cfg.checkpoint_every}


@dataclass
class TrainedRun:
    model: GenZipModel
    dual: DualState
    history: list


def training_windows(cfg, ds):
    """Gap-free train-split windows; enough of them to calibrate the rate model."""
    windows = extract_windows(ds, "train", stride=cfg.window_stride)
    if len(windows) < MIN_CALIBRATION_WINDOWS:
        raise DataValidationError(
            f"{len(windows)} gap-free training windows; at least {MIN_CALIBRATION_WINDOWS} "
            f"are needed to calibrate the rate model (add base stations or days)"
        )
    return windows


def train_reconstruction(cfg, dataset=None, log_path=None):
    """Train policy + codec on reconstruction under the configured budgets."""
    ds = load_dataset(cfg) if dataset is None else dataset
    windows = training_windows(cfg, ds)
    d = ds.k * windows.x.shape[2]
    latent = cfg.effective_latent(d)
    model = GenZipModel(ModelConfig(k=ds.k, t=windows.x.shape[2], n_classes=ds.n_classes,
                                    latent_dim=latent, codec=cfg.codec, policy=cfg.policy,
                                    seed=cfg.seed))
    model.rate_model = calibrate_rate_model(windows.flat, latent)
    dual = DualState(lam=cfg.dual_step, s_budget=cfg.sr, r_budget=cfg.rate_budget(d))
    start_at_budget(model, dual)
    trainer = Trainer(model, _train_config(cfg), dual, log_path=log_path,
                      **_checkpointing(cfg, log_path))
    trainer.fit_reconstruction(windows)
    return TrainedRun(model, trainer.dual, trainer.history)


def _go_samples(cfg, ds, split, tasks, stride):
    horizon = max(t.horizon for t in tasks)
    return extract_go_samples(ds, split, lookback=cfg.lookback, horizon=horizon, stride=stride)


def train_goal_oriented(cfg, base, variant, dataset=None, log_path=None):
    """Attach task heads to a reconstruction-trained run and train them.

    ``variant="recon-based"`` freezes the policy and codec and trains only
    the heads; ``variant="go-e2e"`` trains everything jointly on the task
    losses, with the task embedding feeding the policy and codec.
    """
    if variant not in ("recon-based", "go-e2e"):
        raise ValueError(f"unknown variant {variant!r}")
    ds = load_dataset(cfg) if dataset is None else dataset
    tasks = default_tasks(cfg.lookback, cfg.horizon)
    model = base.model.with_tasks(tasks)
    samples = _go_samples(cfg, ds, "train", tasks, cfg.go_stride)
    if len(samples) == 0:
        raise DataValidationError("no goal-oriented training samples")
    for task in tasks:
        # Start every head at its mean training target.
        model.heads[task.task_id].layers[-1].bias.data[:] = go_targets(samples, task).mean(axis=0)
    tcfg = _train_config(cfg, "goal-oriented", epochs=cfg.go_epochs,
                         batch_size=cfg.go_batch_size)
    tcfg.policy_lr_scale = cfg.go_policy_lr_scale
    trainer = Trainer(model, tcfg, base.dual, log_path=log_path,
                      **_checkpointing(cfg, log_path))
    joint = variant == "go-e2e"
    if joint:
        trainer.fit_goal_oriented(samples, tasks, train_codec=True)
    else:
        heads = nn.Adam(model.params.subset("head"), lr=cfg.lr)
        trainer.fit_goal_oriented(samples, tasks, train_codec=False, optimizer=heads)
    return TrainedRun(model, trainer.dual, trainer.history)


# --------------------------------------------------------------- evaluation

@dataclass
class ResultRow:
    fingerprint: str
    mode: str
    codec: str
    policy: str
    seed: int
    sr_budget: float
    rate_budget: float | None
    achieved_sr: float
    achieved_rate: float
    achieved_cr: float
    mae: float
    kpi_mae: list = field(default_factory=list)
    task_mae: dict = field(default_factory=dict)
    variant: str = ""
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)

    def comparable(self):
        """Every field except the wall-clock time."""
        out = self.to_dict()
        out.pop("wall_time")
        return out


def check_compatible(model, dataset):
    """Raise :class:`CompatibilityError` naming both sides when dimensions disagree."""
    if dataset.k != model.config.k:
        raise CompatibilityError(f"dataset has K={dataset.k} KPIs, checkpoint expects "
                                 f"K={model.config.k}")
    if dataset.n_classes > model.config.n_classes:
        raise CompatibilityError(f"dataset has {dataset.n_classes} BS classes, checkpoint "
                                 f"knows {model.config.n_classes}")


def _wire_roundtrip(model, x, bs_class, hour, task_id, deterministic, rng, chunk=256):
    """Compress, serialise, parse and decompress; returns ``(x_hat, m_s, m_c, n_bytes)``."""
    outs, m_s, m_c, sizes = [], [], [], []
    for a in range(0, x.shape[0], chunk):
        sl = slice(a, a + chunk)
        tid = None if task_id is None else np.asarray(task_id)[sl]
        payloads, dec = model.compress_batch(x[sl], bs_class[sl], hour[sl], tid,
                                             deterministic=deterministic, rng=rng)
        blobs = [pack_container(p) for p in payloads]
        sizes.extend(len(b) for b in blobs)
        outs.append(model.decompress_batch([unpack_container(b) for b in blobs]))
        m_s.append(dec.m_s)
        m_c.append(dec.m_c)
    return np.concatenate(outs), np.concatenate(m_s), np.concatenate(m_c), sizes


def evaluate_reconstruction(model, cfg, dataset=None, split="test"):
    """Full wire-path evaluation on the windows of ``split``."""
    t0 = time.perf_counter()
    ds = load_dataset(cfg) if dataset is None else dataset
    check_compatible(model, ds)
    windows = extract_windows(ds, split, t=model.config.t)
    if len(windows) == 0:
        raise DataValidationError(f"no gap-free {split} windows")
    rng = np.random.default_rng(cfg.seed + EVAL_SEED_OFFSET)
    x = windows.flat
    x_hat, m_s, m_c, sizes = _wire_roundtrip(model, x, windows.bs_class, windows.hour, None,
                                             cfg.deterministic, rng)
    err = np.abs(x_hat - x)
    k, t = model.config.k, model.config.t
    span = ds.bounds[:, 1] - ds.bounds[:, 0]
    kpi_mae = (err.reshape(-1, k, t).mean(axis=(0, 2)) * span).tolist()
    return ResultRow(
        fingerprint=cfg.fingerprint(), mode=cfg.mode, codec=cfg.codec, policy=cfg.policy,
        seed=cfg.seed, sr_budget=cfg.sr, rate_budget=cfg.rate_budget(model.d),
        achieved_sr=sampling_ratio(m_s), achieved_rate=expected_rate(m_s, m_c, model.rate_model),
        achieved_cr=_cr(len(x), model.d, sizes),
        mae=float(err.mean()), kpi_mae=kpi_mae, wall_time=time.perf_counter() - t0,
    )


def evaluate_tasks(model, cfg, dataset=None, split="test", variant=""):
    """Per-task MAE of the heads on wire-path reconstructions of ``split``."""
    t0 = time.perf_counter()
    ds = load_dataset(cfg) if dataset is None else dataset
    check_compatible(model, ds)
    tasks = list(model.tasks.values())
    samples = _go_samples(cfg, ds, split, tasks, cfg.go_eval_stride)
    if len(samples) == 0:
        raise DataValidationError(f"no goal-oriented {split} samples")
    rng = np.random.default_rng(cfg.seed + EVAL_SEED_OFFSET)
    n, n_look = samples.lookback.shape[:2]
    flat = samples.lookback.reshape(n * n_look, -1)
    bs_class = np.repeat(samples.bs_class, n_look)
    hour = np.repeat(samples.hour, n_look)
    task_mae, sr, rate, sizes, recon_err = {}, [], [], [], []
    for task in tasks:
        tid = np.full(len(flat), task.task_id)
        x_hat, m_s, m_c, size = _wire_roundtrip(model, flat, bs_class, hour, tid,
                                                cfg.deterministic, rng)
        sr.append(sampling_ratio(m_s))
        rate.append(expected_rate(m_s, m_c, model.rate_model))
        sizes.extend(size)
        recon_err.append(np.abs(x_hat - flat).mean())
        stack = nn.Tensor(x_hat.reshape(n, -1))
        pred = model.heads[task.task_id](stack, training=False).data
        task_mae[task.task_id] = float(np.abs(pred - go_targets(samples, task)).mean())
    d = model.d
    return ResultRow(
        fingerprint=cfg.fingerprint(), mode="go", codec=cfg.codec, policy=cfg.policy,
        seed=cfg.seed, sr_budget=cfg.sr, rate_budget=cfg.rate_budget(d),
        achieved_sr=float(np.mean(sr)), achieved_rate=float(np.mean(rate)),
        achieved_cr=_cr(len(sizes), d, sizes),
        mae=float(np.mean(recon_err)), task_mae=task_mae, variant=variant,
        wall_time=time.perf_counter() - t0,
    )


def _cr(n_windows, d, sizes):
    """Raw 16-bit bytes over container bytes (same ratio as :func:`measured_cr`)."""
    return n_windows * d * 2 / float(sum(sizes))


# ------------------------------------------------------------- run layout

def run_path(cfg, *parts):
    return os.path.join(cfg.run_dir, cfg.fingerprint(), *parts)


def train_run(cfg, dataset=None, write=True):
    """Train as configured (GO mode ends with the GO-E2E stage); writes the
    config, the metrics log(s) and the checkpoint under :func:`run_path`."""
    log_path = None
    if write:
        os.makedirs(run_path(cfg), exist_ok=True)
        cfg.save(run_path(cfg, "config.txt"))
        log_path = run_path(cfg, "metrics.tsv")
    run = train_reconstruction(cfg, dataset, log_path=log_path)
    if cfg.mode == "go":
        run = train_goal_oriented(cfg, run, "go-e2e", dataset,
                                  log_path=run_path(cfg, "metrics_go.tsv") if write else None)
    if write:
        run.model.save(run_path(cfg, "model"))
    return run


def evaluate_run(model, cfg, dataset=None, split="test"):
    """Reconstruction or task evaluation, whichever the checkpoint supports."""
    if model.tasks:
        return evaluate_tasks(model, cfg, dataset, split, variant="go-e2e")
    return evaluate_reconstruction(model, cfg, dataset, split)


def run_experiment(cfg, dataset=None, write=True):
    """``train`` followed by ``eval``. Returns ``(ResultRow, TrainedRun)``."""
    t0 = time.perf_counter()
    run = train_run(cfg, dataset, write)
    row = evaluate_run(run.model, cfg, dataset)
    row.wall_time = time.perf_counter() - t0
    if write:
        write_result(row, run_path(cfg, "result.json"))
    return row, run


def write_result(row, path):
    with open(path, "w") as fh:
        json.dump(row.to_dict(), fh, indent=1, sort_keys=True)


def read_result(path):
    with open(path) as fh:
        data = json.load(fh)
    data["task_mae"] = {int(k): v for k, v in data.get("task_mae", {}).items()}
    return ResultRow(**data)


# -------------------------------------------------------------------- sweep

def sweep_cells(base, srs, crs, codecs, policies, seeds):
    cells = []
    for sr, cr, codec, policy, seed in itertools.product(srs, crs, codecs, policies, seeds):
        cells.append(base.replace(sr=sr, cr=cr, rate=0.0, codec=codec, policy=policy,
                                  seed=seed))
    if not cells:
        raise ValueError("empty sweep grid")
    return cells


def _run_cell(cfg):
    try:
        row, _ = run_experiment(cfg, write=True)
        return row, None
    except Exception as exc:  # noqa: BLE001  (recorded per cell; the sweep goes on)
        log.error("cell %s failed: %s", cfg.fingerprint(), exc)
        return None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def run_cells(cells, jobs=1):
    """Run independent cells, in parallel when ``jobs > 1``; order is preserved."""
    if jobs <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, cells))


def mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def format_pm(values, digits=4):
    m, s = mean_std(values)
    return f"{m:.{digits}f}±{s:.{digits}f}"


def curve_label(codec, policy, sr=None, cr=None):
    short = {"hybrid": "SH", "generative-only": "SG", "lossless-only": "LZMA"}[codec]
    label = f"{policy}_{short}"
    if sr is not None:
        label += f"_sr{sr:g}"
    if cr is not None:
        label += f"_cr{cr:g}"
    return label


def write_sweep_outputs(out_dir, cells, results, x_axis="cr"):
    """``results.tsv`` (one line per cell), ``summary.tsv`` (mean±std over
    seeds) and one two-column ``.dat`` file per curve."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.tsv"), "w") as fh:
        fh.write("fingerprint\tcodec\tpolicy\tseed\tsr_budget\tcr_target\tachieved_sr\t"
                 "achieved_rate\tachieved_cr\tmae\tstatus\n")
        for cfg, (row, err) in zip(cells, results):
            if row is None:
                fh.write(f"{cfg.fingerprint()}\t{cfg.codec}\t{cfg.policy}\t{cfg.seed}\t{cfg.sr:g}"
                         f"\t{cfg.cr:g}\tnan\tnan\tnan\tnan\tfailed: "
                         f"{err.splitlines()[0]}\n")
                continue
            fh.write(f"{row.fingerprint}\t{cfg.codec}\t{cfg.policy}\t{cfg.seed}\t{cfg.sr:g}\t"
                     f"{cfg.cr:g}\t{row.achieved_sr:.6f}\t{row.achieved_rate:.6f}\t"
                     f"{row.achieved_cr:.6f}\t{row.mae:.6f}\tok\n")
    groups = {}
    for cfg, (row, _) in zip(cells, results):
        if row is not None:
            groups.setdefault((cfg.codec, cfg.policy, cfg.sr, cfg.cr), []).append(row)
    with open(os.path.join(out_dir, "summary.tsv"), "w") as fh:
        fh.write("codec\tpolicy\tsr_budget\tcr_target\tn\tachieved_sr\tachieved_cr\tmae\n")
        for (codec, policy, sr, cr), rows in sorted(groups.items()):
            fh.write(f"{codec}\t{policy}\t{sr:g}\t{cr:g}\t{len(rows)}\t"
                     f"{format_pm([r.achieved_sr for r in rows], 3)}\t"
                     f"{format_pm([r.achieved_cr for r in rows], 3)}\t"
                     f"{format_pm([r.mae for r in rows])}\n")
    curves = {}
    for (codec, policy, sr, cr), rows in groups.items():
        if x_axis == "cr":
            key = curve_label(codec, policy, sr=sr)
            x = float(np.mean([r.achieved_cr for r in rows]))
        else:
            key = curve_label(codec, policy, cr=cr)
            x = float(np.mean([r.achieved_sr for r in rows]))
        curves.setdefault(key, []).append((x, float(np.mean([r.mae for r in rows]))))
    written = []
    for key, points in sorted(curves.items()):
        path = os.path.join(out_dir, f"{key}.dat")
        with open(path, "w") as fh:
            for x, y in sorted(points):
                fh.write(f"{x:.6f} {y:.6f}\n")
        written.append(path)
    return written


def sweep(base, srs, crs, codecs, policies, seeds, x_axis="cr", jobs=1):
    cells = sweep_cells(base, srs, crs, codecs, policies, seeds)
    results = run_cells(cells, jobs)
    out_dir = os.path.join(base.run_dir, "sweep_" + _grid_id(cells))
    dats = write_sweep_outputs(out_dir, cells, results, x_axis)
    return out_dir, cells, results, dats


def _grid_id(cells):
    import hashlib

    text = ",".join(c.fingerprint() for c in cells)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


# --------------------------------------------------------------- GO compare

def compare_go_seed(cfg, dataset=None):
    """Paired Recon-Based / GO-E2E runs sharing one reconstruction-trained codec."""
    ds = load_dataset(cfg) if dataset is None else dataset
    base = train_reconstruction(cfg.replace(mode="recon"), ds)
    rows = {}
    for variant in ("recon-based", "go-e2e"):
        run = train_goal_oriented(cfg, base, variant, ds)
        rows[variant] = evaluate_tasks(run.model, cfg, ds, variant=variant)
    return rows


def compare_go(cfg, seeds, jobs=1):
    """Table-style report: per-task MAE mean±std over seeds for both variants."""
    cells = [cfg.replace(seed=s, mode="go") for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(compare_go_seed, cells))
    else:
        per_seed = [compare_go_seed(c) for c in cells]
    return per_seed, format_go_table(per_seed)


def format_go_table(per_seed):
    tasks = sorted(per_seed[0]["go-e2e"].task_mae)
    names = {t.task_id: t.name for t in default_tasks()}
    lines = ["task\tkpi\trecon-based\tgo-e2e"]
    for tid in tasks:
        rb = [r["recon-based"].task_mae[tid] for r in per_seed]
        ge = [r["go-e2e"].task_mae[tid] for r in per_seed]
        lines.append(f"{tid}\t{names.get(tid, '')}\t{format_pm(rb)}\t{format_pm(ge)}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- mask export

def export_masks(model, out_dir, tasks=None, classes=None, hours=None):
    """Write one grid file per (task, class): a ``T x K`` grid of {0,1,2} per hour context.

    Returns the written paths. A fixed policy has a single grid.
    """
    os.makedirs(out_dir, exist_ok=True)
    k, t = model.config.k, model.config.t
    if model.config.policy == "fixed":
        logits = model.policy.logits.data[None]
        grid = mask_grid(hard_decode(logits), k, t)
        path = os.path.join(out_dir, "masks_fixed.txt")
        with open(path, "w") as fh:
            fh.write("# fixed policy: one mask shared by every context\n")
            fh.write(_grid_text(grid))
        return [path]
    classes = list(range(model.config.n_classes)) if classes is None else list(classes)
    hours = list(range(24)) if hours is None else list(hours)
    if model.tasks:
        tasks = sorted(model.tasks) if tasks is None else list(tasks)
    else:
        tasks = [None]
    paths = []
    for task, c in itertools.product(tasks, classes):
        tids = None if task is None else np.full(len(hours), task)
        ctx = model.encode_context(np.full(len(hours), c), np.asarray(hours), tids)
        decision = hard_decode(model.logits(ctx).data)
        name = f"masks_class{c}.txt" if task is None else f"masks_task{task}_class{c}.txt"
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(f"# task {'none' if task is None else task} class {c}: rows are hours of "
                     f"the window, columns KPIs; 0 unsampled, 1 generative, 2 lossless\n")
            for i, h in enumerate(hours):
                fh.write(f"# hour context {h}\n")
                fh.write(_grid_text(mask_grid(decision.choice[i], k, t)))
        paths.append(path)
    return paths


def _grid_text(grid):
    return "".join(" ".join(str(int(v)) for v in row) + "\n" for row in grid)


def read_mask_file(path):
    """Grids of a mask file as a list of ``T x K`` integer arrays."""
    grids, cur = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#") or not line:
                if cur:
                    grids.append(np.array(cur, dtype=np.int64))
                    cur = []
                continue
            cur.append([int(v) for v in line.split()])
    if cur:
        grids.append(np.array(cur, dtype=np.int64))
    return grids
