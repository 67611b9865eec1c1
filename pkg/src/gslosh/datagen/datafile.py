"""Binary trajectory datasets plus a JSON sidecar manifest.

Layout (integers little-endian):

    magic     8 bytes  b"GSLOSH01"
    version   u32      1
    dt        f64      snapshot spacing in seconds
    n_groups  u32
    group     repeated: name_len u16, name bytes, per-snapshot dim u32
    n_snap    u32
    blocks    per group, contiguous f64 [n_snap * dim]

Surface observations travel as a regular group named "surface" whose rows
are (stations..., heights...). The sidecar `<path>.json` carries fluid
parameters, seed, impulse and provenance; it is read when present.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..state import GROUP_NAMES, FullState, SurfaceObservation

MAGIC = b"GSLOSH01"
VERSION = 1
SURFACE_GROUP = "surface"


class DatasetError(ValueError):
    """Malformed dataset file."""


@dataclass
class SloshDataset:
    """Snapshots of every field group plus the matching surface views."""

    dt: float
    groups: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = {g: arr.shape[0] for g, arr in self.groups.items()}
        if len(set(counts.values())) > 1:
            raise DatasetError(f"snapshot counts disagree across groups: {counts}")

    @property
    def n_snapshots(self):
        if not self.groups:
            return 0
        return next(iter(self.groups.values())).shape[0]

    @property
    def state_groups(self):
        return {g: self.groups[g] for g in GROUP_NAMES if g in self.groups}

    @property
    def surface_points(self):
        return self.groups[SURFACE_GROUP].shape[1] // 2

    @property
    def surface_x(self):
        return self.groups[SURFACE_GROUP][0, : self.surface_points]

    @property
    def surface_heights(self):
        return self.groups[SURFACE_GROUP][:, self.surface_points:]

    def surface(self, i) -> SurfaceObservation:
        return SurfaceObservation.from_vector(self.groups[SURFACE_GROUP][i])

    def full_state(self, i) -> FullState:
        return FullState(**{g: self.groups[g][i] for g in GROUP_NAMES})


def dataset_write(path, ds: SloshDataset):
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<d", ds.dt),
              struct.pack("<I", len(ds.groups))]
    for name, arr in ds.groups.items():
        raw = name.encode("utf-8")
        dim = arr.shape[1] if arr.ndim == 2 else 0
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", dim))
    chunks.append(struct.pack("<I", ds.n_snapshots))
    for arr in ds.groups.values():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(ds.meta, indent=2, sort_keys=True),
                       encoding="utf-8")


def dataset_read(path) -> SloshDataset:
    blob = Path(path).read_bytes()
    pos = 0

    def need(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise DatasetError(
                f"{path}: truncated while reading {what} at offset {pos}"
            )
        piece = blob[pos:pos + n]
        pos += n
        return piece

    if need(8, "magic") != MAGIC:
        raise DatasetError(f"{path}: bad magic at offset 0")
    (version,) = struct.unpack("<I", need(4, "version"))
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported version {version} at offset 8")
    (dt,) = struct.unpack("<d", need(8, "time step"))
    (n_groups,) = struct.unpack("<I", need(4, "group count"))
    names, dims = [], []
    for _ in range(n_groups):
        (name_len,) = struct.unpack("<H", need(2, "group name length"))
        names.append(need(name_len, "group name").decode("utf-8"))
        (dim,) = struct.unpack("<I", need(4, "group dimension"))
        dims.append(dim)
    (n_snap,) = struct.unpack("<I", need(4, "snapshot count"))
    groups = {}
    for name, dim in zip(names, dims):
        payload = need(8 * n_snap * dim, f"block of group {name!r}")
        groups[name] = np.frombuffer(payload, dtype="<f8").reshape(n_snap, dim).copy()
    if pos != len(blob):
        raise DatasetError(f"{path}: {len(blob) - pos} trailing bytes at offset {pos}")
    sidecar = Path(str(path) + ".json")
    meta = {}
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    return SloshDataset(dt=dt, groups=groups, meta=meta)
