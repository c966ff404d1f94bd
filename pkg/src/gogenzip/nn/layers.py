"""Layers used by the policy, the autoencoder and the task heads.

Layers register their weights in a shared :class:`ParamSet` under a dotted
prefix and are otherwise stateless.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import InvalidArgumentError
from .params import glorot_uniform
from .tensor import activation, dropout, linear, take_rows


class Linear:
    def __init__(self, params, name, in_features, out_features, rng, zero_init=False):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = glorot_uniform(rng, in_features, out_features)
        self.weight = params.add(f"{name}.weight", w)
        self.bias = params.add(f"{name}.bias", np.zeros(out_features))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class Embedding:
    def __init__(self, params, name, n_entries, dim, rng):
        self.name = name
        self.n_entries = n_entries
        self.dim = dim
        self.table = params.add(f"{name}.table", glorot_uniform(rng, n_entries, dim))

    def __call__(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_entries):
            bad = idx[(idx < 0) | (idx >= self.n_entries)][0]
            raise InvalidArgumentError(
                f"index {int(bad)} out of range for embedding table {self.name!r} "
                f"with {self.n_entries} entries"
            )
        return take_rows(self.table, idx)


class MLP:
    """Stack of :class:`Linear` layers with an activation (and optional
    dropout) between them; the last layer is linear."""

    def __init__(self, params, name, sizes, rng, act="elu", dropout_rate=0.0, zero_last=False):
        if len(sizes) < 2:
            raise InvalidArgumentError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.act = act
        self.dropout_rate = float(dropout_rate)
        n = len(sizes) - 1
        self.layers = [
            Linear(params, f"{name}.{i}", sizes[i], sizes[i + 1], rng,
                   zero_init=zero_last and i == n - 1)
            for i in range(n)
        ]

    def __call__(self, x, training=False, rng=None):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = activation(self.act, x)
                if self.dropout_rate > 0.0:
                    x = dropout(x, self.dropout_rate, training, rng)
        return x
