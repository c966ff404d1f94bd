"""Conditional autoencoder for the generatively compressed entries."""

from __future__ import annotations

import numpy as np

from .. import nn


class ConditionalAutoencoder:
    """Encoder ``[X_g, c] -> latent`` and decoder ``[latent, c] -> X_hat_g``.

    Hidden sizes default to 512/256 and are mirrored in the decoder.
    """

    def __init__(self, params, d, context_dim, latent_dim, rng, hidden=(512, 256), act="elu"):
        self.d = int(d)
        self.context_dim = int(context_dim)
        self.latent_dim = int(latent_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.encoder = nn.MLP(params, "encoder", (d + context_dim, *self.hidden, latent_dim),
                              rng, act=act)
        self.decoder = nn.MLP(params, "decoder",
                              (latent_dim + context_dim, *reversed(self.hidden), d), rng, act=act)
        # Start the reconstruction in the middle of the normalised range.
        params["decoder.%d.bias" % (len(self.hidden))].data[:] = 0.5

    def encode(self, x_g, context_vector):
        return gen_encode(self, x_g, context_vector)

    def decode(self, latent, context_vector, clamp=True):
        return gen_decode(self, latent, context_vector, clamp=clamp)


def gen_encode(ae, x_g, context_vector):
    """Latent code for the generative subset of a batch of windows (B x D)."""
    return ae.encoder(nn.concat([nn.tensor.as_tensor(x_g), context_vector], axis=-1))


def gen_decode(ae, latent, context_vector, clamp=True):
    """Full-window reconstruction; optionally clamped to [0, 1]."""
    out = ae.decoder(nn.concat([nn.tensor.as_tensor(latent), context_vector], axis=-1))
    return nn.clamp(out, 0.0, 1.0) if clamp else out


def to_wire_latent(latent):
    """Round a latent to the float32 precision used on the wire."""
    return np.asarray(latent, dtype="<f4")
