"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"GGNZ"  u16 version
    repeated until end of file:
        u16 name_length, name (utf-8), u8 rank, rank x u32 dims,
        prod(dims) x float64 values (row-major)
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from ..exceptions import ContainerFormatError

MAGIC = b"GGNZ"
VERSION = 1


def dumps_params(state):
    """Serialise ``{name: array}`` (or a ParamSet) to bytes."""
    if hasattr(state, "state_dict"):
        state = state.state_dict()
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    for name, value in state.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def loads_params(blob):
    blob = memoryview(blob)
    if bytes(blob[:4]) != MAGIC:
        raise ContainerFormatError("bad checkpoint magic", 0)
    if len(blob) < 6:
        raise ContainerFormatError("truncated checkpoint header", len(blob))
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise ContainerFormatError(f"unsupported checkpoint version {version}", 4)
    pos = 6
    state = OrderedDict()
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            if pos + n > len(blob):
                raise ContainerFormatError("truncated parameter name", pos)
            name = bytes(blob[pos:pos + n]).decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            end = pos + 8 * count
            if end > len(blob):
                raise ContainerFormatError(f"truncated values for {name!r}", pos)
            state[name] = np.frombuffer(blob[pos:end], dtype="<f8").reshape(dims).copy()
            pos = end
    except struct.error as exc:
        raise ContainerFormatError(f"truncated checkpoint: {exc}", pos) from None
    return state


def save_params(path, params):
    with open(path, "wb") as fh:
        fh.write(dumps_params(params))


def load_params(path):
    with open(path, "rb") as fh:
        return loads_params(fh.read())
