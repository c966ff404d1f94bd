"""Wire container for one compressed telemetry window.

See ``docs/container_format.md`` for the normative byte layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..exceptions import ContainerFormatError, ContractError

MAGIC = b"GGZP"
VERSION = 1
NO_TASK = 0xFFFF
FLAG_LATENT = 0x01

# version u16, bs_class u16, hour_base u8, task_id u16, K u16, T u16, latent_dim u16, flags u8
_HEADER = struct.Struct("<HHBHHHHB")
HEADER_SIZE = len(MAGIC) + _HEADER.size
BLOB_LENGTH_SIZE = 4


def bitset_size(d):
    return (d + 7) // 8


def fixed_overhead(d):
    """Bytes of a container that do not depend on the payload content."""
    return HEADER_SIZE + 2 * bitset_size(d) + BLOB_LENGTH_SIZE


def pack_bits(mask):
    return np.packbits(np.asarray(mask, dtype=bool), bitorder="little").tobytes()


def unpack_bits(raw, d):
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=d, bitorder="little").astype(bool)


@dataclass(eq=False)
class CompressedPayload:
    """Everything the receiver needs to rebuild one window."""

    m_s: np.ndarray
    m_c: np.ndarray
    latent: np.ndarray | None
    blob: bytes
    bs_class: int
    hour: int
    task_id: int | None
    k: int
    t: int
    latent_dim: int

    def __post_init__(self):
        self.m_s = np.asarray(self.m_s, dtype=bool).reshape(-1)
        self.m_c = np.asarray(self.m_c, dtype=bool).reshape(-1)
        if self.latent is not None:
            self.latent = np.asarray(self.latent, dtype="<f4").reshape(-1)
        self.blob = bytes(self.blob)

    @property
    def d(self):
        return self.k * self.t

    @property
    def lossless_mask(self):
        return self.m_s & ~self.m_c

    def validate(self):
        d = self.d
        if self.m_s.size != d or self.m_c.size != d:
            raise ContractError(f"mask lengths {self.m_s.size}/{self.m_c.size} != K*T = {d}")
        if np.any(self.m_c & ~self.m_s):
            raise ContractError("compression selector marks unsampled entries")
        has_gen = bool(self.m_c.any())
        if has_gen != (self.latent is not None):
            raise ContractError("latent must be present exactly when an entry is generative")
        if self.latent is not None and self.latent.size != self.latent_dim:
            raise ContractError(f"latent has {self.latent.size} values, expected {self.latent_dim}")
        if bool(self.lossless_mask.any()) != bool(self.blob):
            raise ContractError("lossless blob must be non-empty exactly when lossless entries exist")

    def __eq__(self, other):
        if not isinstance(other, CompressedPayload):
            return NotImplemented
        same_latent = (self.latent is None and other.latent is None) or (
            self.latent is not None and other.latent is not None
            and self.latent.tobytes() == other.latent.tobytes()
        )
        return (
            np.array_equal(self.m_s, other.m_s)
            and np.array_equal(self.m_c, other.m_c)
            and same_latent
            and self.blob == other.blob
            and (self.bs_class, self.hour, self.task_id, self.k, self.t, self.latent_dim)
            == (other.bs_class, other.hour, other.task_id, other.k, other.t, other.latent_dim)
        )


def pack_container(payload):
    payload.validate()
    flags = FLAG_LATENT if payload.latent is not None else 0
    task = NO_TASK if payload.task_id is None else int(payload.task_id)
    out = bytearray(MAGIC)
    out += _HEADER.pack(VERSION, payload.bs_class, payload.hour, task, payload.k, payload.t,
                        payload.latent_dim, flags)
    out += pack_bits(payload.m_s)
    out += pack_bits(payload.m_c)
    if payload.latent is not None:
        out += payload.latent.astype("<f4").tobytes()
    out += struct.pack("<I", len(payload.blob))
    out += payload.blob
    return bytes(out)


def unpack_container(data):
    """Parse a container; any inconsistency raises :class:`ContainerFormatError`."""
    data = bytes(data)
    n = len(data)
    if n < HEADER_SIZE:
        raise ContainerFormatError(f"container too short for header ({n} bytes)", n)
    if data[:4] != MAGIC:
        raise ContainerFormatError("bad magic", 0)
    version, bs_class, hour, task, k, t, latent_dim, flags = _HEADER.unpack_from(data, 4)
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}", 4)
    if hour > 23:
        raise ContainerFormatError(f"hour {hour} out of range", 8)
    if flags & ~FLAG_LATENT:
        raise ContainerFormatError(f"unknown flag bits 0x{flags:02x}", HEADER_SIZE - 1)
    d = k * t
    if d == 0:
        raise ContainerFormatError("window has zero entries", 11)
    pos = HEADER_SIZE
    nb = bitset_size(d)
    if n < pos + 2 * nb:
        raise ContainerFormatError("truncated mask bitsets", n)
    raw_s, raw_c = data[pos:pos + nb], data[pos + nb:pos + 2 * nb]
    if d % 8 and ((raw_s[-1] | raw_c[-1]) >> (d % 8)):
        raise ContainerFormatError("non-zero padding bits in mask bitset", pos + nb - 1)
    m_s, m_c = unpack_bits(raw_s, d), unpack_bits(raw_c, d)
    if np.any(m_c & ~m_s):
        raise ContainerFormatError("compression selector marks unsampled entries", pos + nb)
    pos += 2 * nb
    has_latent = bool(flags & FLAG_LATENT)
    if has_latent != bool(m_c.any()):
        raise ContainerFormatError("latent flag disagrees with the compression selector",
                                   HEADER_SIZE - 1)
    latent = None
    if has_latent:
        end = pos + 4 * latent_dim
        if n < end:
            raise ContainerFormatError("truncated latent", n)
        latent = np.frombuffer(data[pos:end], dtype="<f4").copy()
        if not np.all(np.isfinite(latent)):
            raise ContainerFormatError("non-finite latent value", pos)
        pos = end
    if n < pos + BLOB_LENGTH_SIZE:
        raise ContainerFormatError("truncated blob length", n)
    (blob_len,) = struct.unpack_from("<I", data, pos)
    pos += BLOB_LENGTH_SIZE
    if pos + blob_len != n:
        raise ContainerFormatError(
            f"blob length field says {blob_len} bytes but {n - pos} remain", pos - BLOB_LENGTH_SIZE
        )
    blob = data[pos:]
    if bool(blob) != bool((m_s & ~m_c).any()):
        raise ContainerFormatError("lossless blob presence disagrees with the masks",
                                   pos - BLOB_LENGTH_SIZE)
    return CompressedPayload(
        m_s=m_s, m_c=m_c, latent=latent, blob=blob, bs_class=bs_class, hour=hour,
        task_id=None if task == NO_TASK else task, k=k, t=t, latent_dim=latent_dim,
    )
