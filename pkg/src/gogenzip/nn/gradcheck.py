"""Central-difference gradient checking."""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError, InvalidArgumentError
from .autograd import backward


def gradcheck(forward, params, eps=1e-5, coords_per_param=8, rng=None, names=None):
    """Largest relative error between analytic and central-difference gradients.

    ``forward(params)`` must return a scalar Tensor and be deterministic.
    Up to ``coords_per_param`` coordinates are sampled from every parameter
    (all of them for small tensors). The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    rng = np.random.default_rng(0) if rng is None else rng
    names = list(params.names()) if names is None else list(names)

    params.zero_grad()
    loss = forward(params)
    again = forward(params)
    if float(loss.data) != float(again.data):
        raise ContractError("forward is not deterministic: two identical evaluations differ")
    analytic = backward(loss, params)
    params.zero_grad()

    def f():
        return float(forward(params).data)

    worst = 0.0
    for name in names:
        p = params[name]
        flat = p.data.reshape(-1)
        if flat.size <= coords_per_param:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = f()
            flat[i] = orig - eps
            down = f()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = a_flat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
