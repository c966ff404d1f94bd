"""Adam optimiser."""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError, InvalidArgumentError


class Adam:
    """Adam with bias-corrected moments.

    Moment buffers are keyed by parameter name and always shape-match
    their parameter. ``step_count`` increases by exactly one per call to
    :meth:`step`.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, lr_scale=None):
        if lr <= 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        # Per-parameter multipliers of the learning rate, given by name prefix.
        self.scale = {name: _scale_for(name, lr_scale or {}) for name in params.names()}
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads, lr=None):
        missing = [name for name in self.params if name not in grads]
        if missing:
            raise ContractError(f"no gradient supplied for parameters {missing}")
        extra = [name for name in grads if name not in self.params]
        if extra:
            raise ContractError(f"gradients for unknown parameters {extra}")
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        root_c2 = np.sqrt(c2)
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            # (m / c1) / (sqrt(v / c2) + eps), computed with few temporaries.
            denom = np.sqrt(v)
            denom /= root_c2
            denom += self.eps
            step = m / denom
            step *= lr * self.scale[name] / c1
            p.data = p.data - step

def _scale_for(name, lr_scale):
    for prefix, factor in lr_scale.items():
        if name == prefix or name.startswith(prefix + "."):
            return float(factor)
    return 1.0
