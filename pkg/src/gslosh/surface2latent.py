"""Recurrent encoder from free-surface windows to the reduced state.

At runtime only the surface is observable, so the full-field encoder is
replaced by a stack of GRU layers that reads a fixed window of surface
observations and emits the reduced state of the window's final snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad
from .ndgrad import GRU_PARAM_KEYS, ParameterSet
from .state import SurfaceObservation
from .training import fit


@dataclass
class ObservationSequence:
    """A fixed-length window of surface observations ending at time t."""

    observations: list[SurfaceObservation]
    dt: float

    def __post_init__(self):
        if not self.observations:
            raise ValueError("empty observation window")
        p = self.observations[0].n_points
        if any(o.n_points != p for o in self.observations):
            raise ValueError("observations in a window must share their stations")

    def __len__(self):
        return len(self.observations)

    def as_array(self):
        return np.stack([o.as_vector() for o in self.observations])


@dataclass
class GruConfig:
    input_dim: int = 42      # 21 surface points, two coordinates each
    hidden: int = 26
    n_layers: int = 3
    latent_dim: int = 13
    window: int = 16
    lr: float = 1e-3
    wd: float = 1e-5
    epochs: int = 10000


class SurfaceEncoder:
    """GRU layers over the window plus a linear head on the last state."""

    def __init__(self, params: ParameterSet, config: GruConfig):
        self.params = params
        self.config = config

    @classmethod
    def build(cls, rng, config: GruConfig, center, scale):
        params = ParameterSet()
        params.add("norm.center", np.asarray(center, dtype=np.float64), frozen=True)
        params.add("norm.scale", np.asarray(float(scale)), frozen=True)
        params.add("cfg.window", np.asarray(float(config.window)), frozen=True)
        n_in = config.input_dim
        for layer in range(config.n_layers):
            init = ndgrad.gru_cell_init(rng, n_in, config.hidden)
            for k, v in init.items():
                params.add(f"gru{layer}.{k}", v)
            n_in = config.hidden
        params.add("fc.w", ndgrad.xavier_uniform(rng, config.latent_dim, config.hidden))
        params.add("fc.b", np.zeros(config.latent_dim))
        return cls(params, config)

    @classmethod
    def from_params(cls, params: ParameterSet):
        n_layers = 0
        while f"gru{n_layers}.wz" in params:
            n_layers += 1
        cfg = GruConfig(
            input_dim=params["gru0.wz"].shape[1],
            hidden=params["gru0.uz"].shape[0],
            n_layers=n_layers,
            latent_dim=params["fc.w"].shape[0],
            window=int(params["cfg.window"].data),
        )
        return cls(params, cfg)

    def _cell_params(self, layer):
        return {k: self.params[f"gru{layer}.{k}"] for k in GRU_PARAM_KEYS}

    def encode(self, windows):
        """Batch of windows [N, W, F] to reduced states [N, d]."""
        arr = windows.data if isinstance(windows, ndgrad.Tensor) else \
            np.asarray(windows, dtype=np.float64)
        cfg = self.config
        if arr.ndim != 3 or arr.shape[1] != cfg.window or arr.shape[2] != cfg.input_dim:
            raise ndgrad.ShapeError(
                f"expected windows of shape [*, {cfg.window}, {cfg.input_dim}], "
                f"got {arr.shape}"
            )
        center = self.params["norm.center"].data
        inv_scale = 1.0 / float(self.params["norm.scale"].data)
        n = arr.shape[0]
        hidden = [ndgrad.Tensor(np.zeros((n, cfg.hidden)))
                  for _ in range(cfg.n_layers)]
        for t in range(cfg.window):
            x = ndgrad.Tensor((arr[:, t, :] - center) * inv_scale)
            for layer in range(cfg.n_layers):
                hidden[layer] = ndgrad.gru_cell_forward(
                    x, hidden[layer], self._cell_params(layer)
                )
                x = hidden[layer]
        return ndgrad.dense_forward(hidden[-1], self.params["fc.w"],
                                    self.params["fc.b"], "linear")


def encode_sequence(seq: ObservationSequence, encoder: SurfaceEncoder):
    """Reduced state for the final snapshot of one observation window."""
    if len(seq) != encoder.config.window:
        raise ValueError(
            f"window has {len(seq)} observations, encoder expects "
            f"{encoder.config.window}"
        )
    return encoder.encode(seq.as_array()[None]).data[0].copy()


def gru_loss(x_hat, x):
    """Mean squared error over every entry."""
    x_hat, x = ndgrad.astensor(x_hat), ndgrad.astensor(x)
    if x_hat.shape != x.shape:
        raise ndgrad.ShapeError(f"latent shapes disagree: {x_hat.shape} vs {x.shape}")
    return ndgrad.mean_all(ndgrad.square(ndgrad.sub(x_hat, x)))


def make_windows(series, window, run_bounds=None, horizon=0):
    """Sliding windows over a snapshot series.

    Returns (windows [K, window, F], end_indices [K]). Windows never
    straddle run boundaries, and `horizon` extra snapshots are required
    to exist after each window (for prediction targets).
    """
    series = np.asarray(series)
    t = series.shape[0]
    bounds = [0, t] if run_bounds is None else list(run_bounds)
    wins, ends = [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        for end in range(lo + window - 1, hi - horizon):
            wins.append(series[end - window + 1:end + 1])
            ends.append(end)
    if not wins:
        return np.empty((0, window) + series.shape[1:]), np.empty(0, dtype=np.intp)
    return np.stack(wins), np.asarray(ends, dtype=np.intp)


def train_surface_encoder(windows, targets, config: GruConfig, seed, log=None):
    """Fit the encoder on (window, reduced-state) pairs; returns (enc, history).

    The decoder plays no part in this stage; it stays untouched.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = ndgrad.Tensor(np.asarray(targets, dtype=np.float64))
    center = windows.reshape(-1, windows.shape[-1]).mean(axis=0)
    spread = float(np.sqrt(np.mean((windows - center) ** 2)))
    rng = np.random.default_rng(seed)
    enc = SurfaceEncoder.build(rng, config, center, spread if spread > 0 else 1.0)

    def loss_fn():
        return gru_loss(enc.encode(windows), targets)

    history = fit(enc.params, loss_fn, epochs=config.epochs, lr=config.lr,
                  weight_decay=config.wd, log=log)
    return enc, history
