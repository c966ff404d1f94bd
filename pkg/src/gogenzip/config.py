"""Experiment configuration: flat ``key=value`` files with a stable fingerprint."""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields

from .exceptions import InvalidArgumentError
from .model import CODECS, POLICIES

SEED_ENV = "GGZ_SEED"
MODES = ("recon", "go")
DEFAULT_LATENT = 32
# Fields that only affect where and how fast results are produced.
NON_SEMANTIC = ("run_dir", "jobs", "checkpoint_every")


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InvalidArgumentError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass
class ExperimentConfig:
    """Everything needed to regenerate one training + evaluation run.

    The rate budget is given either as a target compression ratio ``cr`` or
    directly as a normalised ``rate``. ``latent_dim=0`` picks the latent
    size automatically (from the rate budget for the generative-only codec).
    """

    mode: str = "recon"
    policy: str = "adaptive"
    codec: str = "hybrid"
    sr: float = 0.4
    cr: float = 0.0
    rate: float = 0.0
    latent_dim: int = 0
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    dual_step: float = 0.1
    tau_start: float = 1.0
    tau_end: float = 0.1
    policy_lr_scale: float = 0.3
    lr_final: float = 0.05
    seed: int = 0
    data: str = "synth"
    synth_seed: int = 0
    n_bs: int = 64
    n_days: int = 10
    n_classes: int = 4
    window_stride: int = 24
    lookback: int = 3
    horizon: int = 3
    go_stride: int = 6
    go_eval_stride: int = 12
    go_epochs: int = 8
    go_policy_lr_scale: float = 1.0
    go_batch_size: int = 60
    deterministic: bool = False
    run_dir: str = "runs"
    jobs: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode == "reconstruction":
            self.mode = "recon"
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.codec not in CODECS:
            raise InvalidArgumentError(f"codec must be one of {CODECS}, got {self.codec!r}")
        if self.policy not in POLICIES:
            raise InvalidArgumentError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not 0.0 < self.sr <= 1.0:
            raise InvalidArgumentError(f"sr must lie in (0, 1], got {self.sr}")
        if self.cr < 0 or self.rate < 0:
            raise InvalidArgumentError("cr and rate must be non-negative")
        if self.cr and self.rate:
            raise InvalidArgumentError("give the rate budget as either cr or rate, not both")
        for name in ("epochs", "batch_size", "n_bs", "n_days", "n_classes", "window_stride",
                     "lookback", "horizon", "go_stride", "go_eval_stride", "go_batch_size",
                     "jobs"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be at least 1")
        if self.latent_dim < 0:
            raise InvalidArgumentError("latent_dim must be non-negative")
        if self.checkpoint_every < 0:
            raise InvalidArgumentError("checkpoint_every must be non-negative")
        if self.go_epochs < 0:
            raise InvalidArgumentError("go_epochs must be non-negative")
        return self

    # ------------------------------------------------------------ derived
    def rate_budget(self, d):
        from .codec import rate_budget_for_cr

        if self.rate:
            return float(self.rate)
        if self.cr:
            return rate_budget_for_cr(self.cr, d)
        return None

    def effective_latent(self, d):
        from .codec import latent_dim_for_rate

        if self.latent_dim:
            return int(self.latent_dim)
        budget = self.rate_budget(d)
        if self.codec == "generative-only" and budget is not None:
            return latent_dim_for_rate(budget, d)
        return DEFAULT_LATENT

    # ------------------------------------------------------------ identity
    def to_dict(self):
        return asdict(self)

    def semantic_items(self):
        return [(k, v) for k, v in sorted(self.to_dict().items()) if k not in NON_SEMANTIC]

    def fingerprint(self):
        text = "".join(f"{k}={_format(v)}\n" for k, v in self.semantic_items())
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig(**data)

    def dumps(self):
        return "".join(f"{k}={_format(v)}\n" for k, v in self.to_dict().items())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_items(cls, items, base=None):
        """Build from ``{key: string}``; unknown keys are an error."""
        types = {f.name: f.type for f in fields(cls)}
        data = {} if base is None else base.to_dict()
        for key, raw in items.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise InvalidArgumentError(f"unknown configuration key {key!r}")
            data[key] = _parse(raw, types[key], key)
        return cls(**data)

    @classmethod
    def load(cls, path, base=None):
        return cls.from_items(parse_kv(path), base=base)


def parse_kv(path):
    """Read a flat ``key=value`` file; ``#`` starts a comment."""
    items = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            items[key.strip()] = value.strip()
    return items


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw, typ, key):
    if not isinstance(raw, str):
        return raw
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise InvalidArgumentError(f"bad value {raw!r} for {key} ({typ})") from None
    return raw
