"""Named parameter collections and initialisation."""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from ..exceptions import ContractError
from .tensor import Tensor


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class ParamSet:
    """Ordered mapping of parameter name to a trainable leaf :class:`Tensor`."""

    def __init__(self):
        self._params = OrderedDict()

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def values(self):
        return self._params.values()

    def n_values(self):
        return int(sum(p.size for p in self._params.values()))

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_dict(self):
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state_dict(self, state, strict=True):
        if strict and set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise ContractError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            if name not in self._params:
                continue
            p = self._params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != p.shape:
                raise ContractError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()

    def subset(self, prefix):
        """Parameters whose names start with ``prefix``."""
        out = ParamSet()
        for name, p in self._params.items():
            if name.startswith(prefix):
                out._params[name] = p
        return out
