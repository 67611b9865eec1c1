"""Value types shared across the pipeline.

A full-field snapshot groups the per-column fields of the simulated
liquid; a surface observation is the partial view available at runtime,
equally spaced samples of the free surface. The latent map records which
bottleneck units of which field group survived sparsification and where
they sit inside the reduced state vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GROUP_NAMES = ("q", "v", "e", "sigma", "tau")


@dataclass
class FullState:
    """One snapshot of every field group (flat float64 vectors)."""

    q: np.ndarray
    v: np.ndarray
    e: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray

    def group(self, name):
        return getattr(self, name)

    def as_dict(self):
        return {g: self.group(g) for g in GROUP_NAMES}


@dataclass
class SurfaceObservation:
    """Free-surface heights at equally spaced horizontal stations."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError(
                f"surface coordinates disagree: {self.x.shape} vs {self.y.shape}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("surface observation contains non-finite values")
        dx = np.diff(self.x)
        if self.x.size >= 2 and (dx.min() <= 0 or np.ptp(dx) > 1e-9 * abs(dx[0])):
            raise ValueError("surface stations must be strictly increasing and equally spaced")

    @property
    def n_points(self):
        return self.x.size

    def as_vector(self):
        """Stations then heights, the wire layout used everywhere."""
        return np.concatenate([self.x, self.y])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        p = vec.size // 2
        return cls(vec[:p], vec[p:])


@dataclass
class LatentMap:
    """Placement of the retained bottleneck units in the reduced state.

    active[g] lists the surviving unit indices of group g's bottleneck;
    fill[g] holds the training-mean code used for the dropped units when
    decoding. Slices follow the canonical group order.
    """

    active: dict[str, np.ndarray]
    fill: dict[str, np.ndarray]
    groups: tuple[str, ...] = GROUP_NAMES

    slices: dict[str, slice] = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        offset = 0
        self.slices = {}
        for g in self.groups:
            idx = np.asarray(self.active[g], dtype=np.intp)
            self.active[g] = idx
            self.slices[g] = slice(offset, offset + idx.size)
            offset += idx.size
        self.dim = offset

    def to_json(self):
        return {
            "groups": list(self.groups),
            "active": {g: self.active[g].tolist() for g in self.groups},
            "fill": {g: self.fill[g].tolist() for g in self.groups},
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            active={g: np.asarray(v, dtype=np.intp) for g, v in obj["active"].items()},
            fill={g: np.asarray(v, dtype=np.float64) for g, v in obj["fill"].items()},
            groups=tuple(obj["groups"]),
        )
