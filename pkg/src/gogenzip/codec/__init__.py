"""Hybrid codec: conditional autoencoder, LZMA path, wire container, rate model."""

from .autoencoder import ConditionalAutoencoder, gen_decode, gen_encode, to_wire_latent
from .container import (
    CompressedPayload,
    bitset_size,
    fixed_overhead,
    pack_container,
    unpack_container,
)
from .lossless import dequantize, lossless_decode, lossless_encode, quantize, quantize_grid
from .merge import entry_sources, merge_reconstruction
from .rate import (
    RateModel,
    calibrate_rate_model,
    cr_for_rate,
    generative_rate,
    latent_dim_for_rate,
    measured_cr,
    rate_budget_for_cr,
)

__all__ = [
    "CompressedPayload", "ConditionalAutoencoder", "RateModel", "bitset_size",
    "calibrate_rate_model", "cr_for_rate", "dequantize", "entry_sources", "fixed_overhead",
    "gen_decode", "gen_encode", "generative_rate", "latent_dim_for_rate", "lossless_decode",
    "lossless_encode", "measured_cr", "merge_reconstruction", "pack_container", "quantize",
    "quantize_grid", "rate_budget_for_cr", "to_wire_latent", "unpack_container",
]
