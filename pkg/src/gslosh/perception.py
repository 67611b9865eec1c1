"""Camera geometry and free-surface extraction from recorded frames.

Frames are ingested from files (8-bit grayscale and 16-bit depth PGM),
never from a device, so every stage is deterministic and testable. Depth
samples follow the PGM big-endian convention and are interpreted as
millimeters, converted to meters on load.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .state import SurfaceObservation


class SurfaceNotFound(ValueError):
    """No usable liquid boundary in the frame."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus rigid extrinsics (world -> camera)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation",
                           np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be > 0, got {self.fx}, {self.fy}")
        r = self.rotation
        if r.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("extrinsics must be a 3x3 rotation and a 3-vector")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
            raise ValueError("rotation must be proper (det +1)")

    @property
    def intrinsics(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @classmethod
    def identity(cls):
        return cls(1.0, 1.0, 0.0, 0.0, np.eye(3), np.zeros(3))

    def to_json(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "R": self.rotation.reshape(-1).tolist(),
            "t": self.translation.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["fx"], obj["fy"], obj["cx"], obj["cy"],
                   np.asarray(obj["R"], dtype=np.float64).reshape(3, 3),
                   np.asarray(obj["t"], dtype=np.float64))


def project(p_w, cam: CameraModel):
    """World point(s) -> pixel coordinates (u, v) by homogeneous projection."""
    p_w = np.asarray(p_w, dtype=np.float64)
    p_cam = p_w @ cam.rotation.T + cam.translation
    z = p_cam[..., 2]
    if np.any(z <= 0):
        raise ValueError("point is not in front of the camera (depth <= 0)")
    u = cam.fx * p_cam[..., 0] / z + cam.cx
    v = cam.fy * p_cam[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def unproject(u, v, depth, cam: CameraModel):
    """Pixel plus depth -> world point: R^T (K^-1 depth [u, v, 1] - t)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("depth must be > 0 (invalid depth pixel)")
    x = depth * (u - cam.cx) / cam.fx
    y = depth * (v - cam.cy) / cam.fy
    p_cam = np.stack([x, y, depth], axis=-1)
    return (p_cam - cam.translation) @ cam.rotation


def extract_surface(frame, threshold):
    """Topmost air-to-liquid transition per image column.

    The liquid is dark (below threshold), the environment above it is
    bright. For each column the first below-threshold row that has an
    above-threshold row immediately above is reported; columns with no
    such transition are omitted. Returns (cols, rows) arrays.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValueError(f"expected a 2-D frame, got shape {frame.shape}")
    if not 0 < threshold < 255:
        raise ValueError(f"threshold must lie in (0, 255), got {threshold}")
    dark = frame < threshold
    transition = dark[1:, :] & ~dark[:-1, :]
    cols = []
    rows = []
    for c in range(frame.shape[1]):
        hits = np.nonzero(transition[:, c])[0]
        if hits.size:
            cols.append(c)
            rows.append(hits[0] + 1)
    if len(cols) < 2:
        raise SurfaceNotFound(
            f"found the interface in {len(cols)} columns, need at least 2"
        )
    return np.asarray(cols, dtype=np.intp), np.asarray(rows, dtype=np.intp)


def resample_surface(x, y, n_points):
    """Piecewise-linear resampling onto equally spaced stations.

    Input samples are sorted by horizontal coordinate; duplicates within
    1e-12 are averaged. The stations span [min(x), max(x)].
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"coordinate arrays disagree: {x.shape} vs {y.shape}")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    keep_x, keep_y = [x[0]], [y[0]]
    counts = [1]
    for xi, yi in zip(x[1:], y[1:]):
        if xi - keep_x[-1] <= 1e-12:
            keep_y[-1] += yi
            counts[-1] += 1
        else:
            keep_x.append(xi)
            keep_y.append(yi)
            counts.append(1)
    xs = np.asarray(keep_x)
    ys = np.asarray(keep_y) / np.asarray(counts)
    if xs.size < 2:
        raise ValueError("need at least 2 distinct horizontal positions")
    stations = np.linspace(xs[0], xs[-1], n_points)
    return SurfaceObservation(stations, np.interp(stations, xs, ys))


class HeightResampler:
    """Fixed linear map from a height field to its station samples.

    Precomputes the piecewise-linear interpolation weights for sampling
    heights given at `x_columns` onto `n_points` equally spaced stations,
    so the resampling is a single matrix product (and therefore
    differentiable through a plain matmul).
    """

    def __init__(self, x_columns, n_points):
        x = np.asarray(x_columns, dtype=np.float64)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("column positions must be strictly increasing")
        stations = np.linspace(x[0], x[-1], n_points)
        matrix = np.zeros((n_points, x.size))
        seg = np.clip(np.searchsorted(x, stations, side="right") - 1, 0, x.size - 2)
        w = (stations - x[seg]) / (x[seg + 1] - x[seg])
        rows = np.arange(n_points)
        matrix[rows, seg] = 1.0 - w
        matrix[rows, seg + 1] += w
        self.stations = stations
        self.matrix = matrix

    def __call__(self, heights):
        """heights [n_cols] or [N, n_cols] -> station heights."""
        return np.asarray(heights) @ self.matrix.T

    def observation(self, heights) -> SurfaceObservation:
        return SurfaceObservation(self.stations, self(heights))


def surface_from_frames(gray, depth_m, cam: CameraModel, threshold, n_points):
    """Full per-frame pipeline: detect, lift to world space, resample.

    The world x axis is taken as the horizontal coordinate and the world
    y axis (negated image-up direction) as the height.
    """
    cols, rows = extract_surface(gray, threshold)
    d = depth_m[rows, cols]
    ok = d > 0
    if ok.sum() < 2:
        raise SurfaceNotFound("fewer than 2 interface pixels carry valid depth")
    pts = unproject(cols[ok].astype(float), rows[ok].astype(float), d[ok], cam)
    return resample_surface(pts[:, 0], -pts[:, 1], n_points)


# PGM helpers (binary P5, 8-bit gray and 16-bit big-endian depth).

def write_pgm(path, image, maxval=None):
    image = np.asarray(image)
    if maxval is None:
        maxval = 255 if image.dtype == np.uint8 else 65535
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode()
    if maxval < 256:
        payload = image.astype(np.uint8).tobytes()
    else:
        payload = image.astype(">u2").tobytes()
    Path(path).write_bytes(header + payload)


def read_pgm(path):
    """Returns (array, maxval); 16-bit images come back as uint16."""
    blob = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        if pos >= len(blob):
            raise ValueError(f"{path}: truncated PGM header")
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(blob) and not blob[end:end + 1].isspace():
            end += 1
        if end > pos:
            fields.append(blob[pos:end])
        pos = end + 1
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    width, height, maxval = (int(f) for f in fields[1:])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = width * height * dtype.itemsize
    payload = blob[pos:pos + expected]
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated PGM payload")
    img = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return (img.astype(np.uint16) if maxval > 255 else img.copy()), maxval


def read_depth_pgm(path):
    """16-bit depth PGM in millimeters -> float64 meters."""
    img, maxval = read_pgm(path)
    if maxval <= 255:
        raise ValueError(f"{path}: depth frames must be 16-bit PGM")
    return img.astype(np.float64) / 1000.0
