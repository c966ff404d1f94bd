"""LZMA path: 16-bit fixed-point quantisation followed by raw LZMA2."""

from __future__ import annotations

import lzma

import numpy as np

from ..exceptions import ContractError, CorruptPayloadError

QUANT_SCALE = 1 << 16
QUANT_MAX = QUANT_SCALE - 1
LZMA_PRESET = 9 | lzma.PRESET_EXTREME
LZMA_FILTERS = ({"id": lzma.FILTER_LZMA2, "preset": LZMA_PRESET},)
# The encoded stream is identical for any dictionary at least as large as the
# input; a small one avoids allocating the preset's 64 MiB match finder.
_SMALL_DICT = 1 << 16
RANGE_TOLERANCE = 1e-9


def quantize(values):
    """Map values in [0, 1] to uint16 codes, rounding half to even.

    Codes are ``round(x * 2**16)`` capped at ``2**16 - 1``.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size and (x.min() < -RANGE_TOLERANCE or x.max() > 1.0 + RANGE_TOLERANCE):
        raise ContractError(
            f"lossless values must lie in [0, 1]; got range [{x.min():.6g}, {x.max():.6g}]"
        )
    return np.minimum(np.rint(np.clip(x, 0.0, 1.0) * QUANT_SCALE), QUANT_MAX).astype("<u2")


def dequantize(codes):
    return np.asarray(codes, dtype=np.float64) / QUANT_SCALE


def quantize_grid(values):
    """Values snapped to the quantisation grid (what the receiver sees)."""
    return dequantize(quantize(values))


def lossless_encode(window, mask):
    """Compress the entries of ``window`` selected by ``mask`` (row-major order)."""
    window = np.asarray(window, dtype=np.float64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape != window.shape:
        raise ContractError(f"mask length {mask.size} != window length {window.size}")
    if not mask.any():
        return b""
    raw = quantize(window[mask]).tobytes()
    filters = LZMA_FILTERS
    if len(raw) <= _SMALL_DICT:
        filters = ({"id": lzma.FILTER_LZMA2, "preset": LZMA_PRESET, "dict_size": _SMALL_DICT},)
    return lzma.compress(raw, format=lzma.FORMAT_RAW, filters=filters)


def lossless_decode(blob, mask):
    """Inverse of :func:`lossless_encode`; returns a length-D array, zero off-mask."""
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    count = int(mask.sum())
    out = np.zeros(mask.size)
    if count == 0:
        if len(blob):
            raise CorruptPayloadError("non-empty lossless blob for an empty mask")
        return out
    dec = lzma.LZMADecompressor(format=lzma.FORMAT_RAW, filters=LZMA_FILTERS)
    try:
        raw = dec.decompress(bytes(blob))
    except lzma.LZMAError as exc:
        raise CorruptPayloadError(f"lossless blob does not decode: {exc}") from None
    if not dec.eof or dec.unused_data:
        raise CorruptPayloadError("lossless blob is truncated or has trailing bytes")
    if len(raw) != 2 * count:
        raise CorruptPayloadError(
            f"lossless blob holds {len(raw)} bytes, expected {2 * count} for {count} entries"
        )
    out[mask] = dequantize(np.frombuffer(raw, dtype="<u2"))
    return out
