"""Binary parameter checkpoints.

Layout (all integers little-endian):

    magic   8 bytes  b"GSNN0001"
    count   u32      number of entries
    entry   repeated:
        name_len  u16
        name      name_len bytes (utf-8)
        frozen    u8 (0 or 1)
        rank      u8
        extents   rank * u32
        payload   product(extents) * f64, little-endian

Round trips are bit-exact; any structural damage is rejected with the
byte offset at which parsing failed.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .params import ParameterSet

MAGIC = b"GSNN0001"


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


def save_params(path, params: ParameterSet):
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for name in params.names():
        data = params[name].data
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", int(params.is_frozen(name)), data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> ParameterSet:
    blob = Path(path).read_bytes()
    pos = 0

    def need(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(
                f"{path}: truncated while reading {what} at offset {pos}"
            )
        piece = blob[pos:pos + n]
        pos += n
        return piece

    if need(8, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic at offset 0")
    (count,) = struct.unpack("<I", need(4, "entry count"))
    params = ParameterSet()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2, "name length"))
        name = need(name_len, "name").decode("utf-8")
        frozen, rank = struct.unpack("<BB", need(2, "flags"))
        shape = struct.unpack(f"<{rank}I", need(4 * rank, "extents"))
        n = int(np.prod(shape)) if rank else 1
        payload = need(8 * n, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        params.add(name, arr, frozen=bool(frozen))
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes at offset {pos}")
    return params


def file_digest(path):
    """Short content id used in run manifests."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
