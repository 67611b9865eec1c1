"""The structure-preserving integrator network and the composed simulator.

The network maps a reduced state to the flat operator vector that
`metriplectic` unpacks; one forward-Euler step in the reduced space plus
the decoder yields the next full-field state. The composed simulator
supports two rollout modes:

* observation-driven: every step re-encodes a window of measured
  surfaces, the way the model is used against live data,
* closed-loop: predictions are fed back into the window, the way the
  model is evaluated for autonomy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metriplectic as mp
from . import ndgrad
from .ndgrad import ParameterSet
from .perception import HeightResampler
from .reduction import AutoencoderBank
from .state import GROUP_NAMES, FullState
from .surface2latent import SurfaceEncoder, make_windows
from .training import fit


@dataclass
class SpnnConfig:
    latent_dim: int = 13
    width: int = 195
    n_layers: int = 13       # affine layers; first and last are linear
    lambda_mse: float = 1e3
    lr: float = 1e-3
    wd: float = 1e-5
    epochs: int = 5000

    @property
    def packed_dim(self):
        return mp.packed_length(self.latent_dim)


class SpnnNet:
    """Deep dense network emitting packed operator vectors.

    ReLU activations everywhere except the first and the last layer,
    which are linear.
    """

    def __init__(self, params: ParameterSet, config: SpnnConfig):
        self.params = params
        self.config = config
        self.layout = mp.PackingLayout.for_dim(config.latent_dim)

    @classmethod
    def build(cls, rng, config: SpnnConfig):
        params = ParameterSet()
        dims = [config.latent_dim] + [config.width] * (config.n_layers - 1) \
            + [config.packed_dim]
        for i in range(config.n_layers):
            params.add(f"l{i}.w", ndgrad.xavier_uniform(rng, dims[i + 1], dims[i]))
            params.add(f"l{i}.b", np.zeros(dims[i + 1]))
        return cls(params, config)

    @classmethod
    def from_params(cls, params: ParameterSet, lambda_mse=1e3):
        n_layers = 0
        while f"l{n_layers}.w" in params:
            n_layers += 1
        packed = params[f"l{n_layers - 1}.w"].shape[0]
        latent = params["l0.w"].shape[1]
        cfg = SpnnConfig(
            latent_dim=latent,
            width=params["l0.w"].shape[0],
            n_layers=n_layers,
            lambda_mse=lambda_mse,
        )
        if cfg.packed_dim != packed:
            raise ValueError(
                f"checkpoint emits {packed} operator entries, but a latent "
                f"dimension of {latent} needs {cfg.packed_dim}"
            )
        return cls(params, cfg)

    def forward(self, x):
        """Reduced states [N, d] (tensor or array) -> packed vectors."""
        h = ndgrad.astensor(x)
        n = self.config.n_layers
        for i in range(n):
            act = "linear" if i in (0, n - 1) else "relu"
            h = ndgrad.dense_forward(h, self.params[f"l{i}.w"],
                                     self.params[f"l{i}.b"], act)
        return h

    def operators(self, x) -> mp.GenericOperators:
        """Unpacked quadruple for a single reduced state."""
        packed = self.forward(np.asarray(x, dtype=np.float64)[None]).data[0]
        return mp.unpack_operators(packed, self.config.latent_dim)

    def step_batch(self, x, dt):
        """One Euler step for a batch of reduced states (plain arrays).

        Returns (next states [N, d], packed vectors [N, packed]).
        """
        packed = self.forward(x).data
        ops = mp.unpack_operators_traced(ndgrad.Tensor(packed), self.layout)
        nxt = mp.euler_step_traced(ndgrad.Tensor(np.asarray(x)), ops, dt).data
        if not np.all(np.isfinite(nxt)):
            raise mp.DivergenceError("reduced state became non-finite")
        return nxt, packed


def spnn_loss(x_next_true, x_next_pred, ops_list, lambda_mse=1e3):
    """Weighted prediction MSE plus the mean degeneracy residual."""
    x_next_true = np.asarray(x_next_true, dtype=np.float64)
    x_next_pred = np.asarray(x_next_pred, dtype=np.float64)
    mse = float(np.mean((x_next_true - x_next_pred) ** 2))
    if isinstance(ops_list, mp.GenericOperators):
        ops_list = [ops_list]
    deg = 0.0
    for ops in ops_list:
        r_l, r_m = mp.degeneracy_residual(ops)
        deg += r_l + r_m
    return lambda_mse * mse + deg / len(ops_list)


def train_spnn(latents, dt, config: SpnnConfig, seed, log=None):
    """Fit the integrator on consecutive reduced-state pairs.

    `latents` is [T, d] (or a list of such arrays, one per run); the loss
    is lambda_mse * MSE(one-step prediction) plus the mean degeneracy
    residual, both over all pairs.
    """
    if isinstance(latents, np.ndarray):
        latents = [latents]
    x_now = np.concatenate([l[:-1] for l in latents])
    x_next = np.concatenate([l[1:] for l in latents])
    rng = np.random.default_rng(seed)
    net = SpnnNet.build(rng, config)
    n = x_now.shape[0]
    x_now_t = ndgrad.Tensor(x_now)
    x_next_t = ndgrad.Tensor(x_next)

    def loss_fn():
        packed = net.forward(x_now_t)
        ops = mp.unpack_operators_traced(packed, net.layout)
        pred = mp.euler_step_traced(x_now_t, ops, dt)
        mse = ndgrad.mean_all(ndgrad.square(ndgrad.sub(pred, x_next_t)))
        deg = ndgrad.scale(
            ndgrad.add(ndgrad.sum_all(ndgrad.square(ops["LDS"])),
                       ndgrad.sum_all(ndgrad.square(ops["MDE"]))),
            1.0 / n,
        )
        return ndgrad.add(ndgrad.scale(mse, config.lambda_mse), deg)

    history = fit(net.params, loss_fn, epochs=config.epochs, lr=config.lr,
                  weight_decay=config.wd, log=log)
    return net, history


@dataclass
class Geometry:
    """Container layout shared between datasets and the simulator."""

    box_width: float
    fill_height: float
    n_columns: int
    surface_points: int

    @property
    def column_x(self):
        dx = self.box_width / self.n_columns
        return (np.arange(self.n_columns) + 0.5) * dx

    def to_json(self):
        return {
            "box_width": self.box_width,
            "fill_height": self.fill_height,
            "n_columns": self.n_columns,
            "surface_points": self.surface_points,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["box_width"], obj["fill_height"],
                   obj["n_columns"], obj["surface_points"])


@dataclass
class RolloutResult:
    """Predicted snapshots plus where they land in the source series."""

    latents: np.ndarray          # [K, d]
    groups: dict[str, np.ndarray]
    surface_heights: np.ndarray  # [K, P]
    stations: np.ndarray
    target_indices: np.ndarray   # snapshot index each prediction refers to

    def full_states(self):
        return [
            FullState(**{g: self.groups[g][i] for g in GROUP_NAMES})
            for i in range(self.latents.shape[0])
        ]


class LearnedSimulator:
    """Encoder, integrator and decoder assembled for rollouts."""

    def __init__(self, bank: AutoencoderBank, encoder: SurfaceEncoder,
                 net: SpnnNet, geometry: Geometry, dt_source):
        self.bank = bank
        self.encoder = encoder
        self.net = net
        self.geometry = geometry
        self.dt_source = dt_source
        self.resampler = HeightResampler(geometry.column_x,
                                         geometry.surface_points)

    @property
    def window(self):
        return self.encoder.config.window

    def predict_from_windows(self, windows, dt):
        """One integration step per window: (latents, groups, heights, packed)."""
        latent_now = self.encoder.encode(windows).data
        latent_next, packed = self.net.step_batch(latent_now, dt)
        groups = self.bank.decode_state(latent_next)
        heights = self.resampler(groups["q"])
        return latent_next, groups, heights, packed

    def rollout_observation_driven(self, surfaces, dt, steps=None):
        """Re-encode measured surfaces at every step.

        `surfaces` is the [T, 2P] observation series; predictions are made
        for snapshots window..window+steps-1 (each from the window ending
        just before it).
        """
        surfaces = np.asarray(surfaces, dtype=np.float64)
        w = self.window
        available = surfaces.shape[0] - w
        steps = available if steps is None else steps
        if steps > available:
            raise ValueError(
                f"requested {steps} steps but the series supports {available}"
            )
        if steps <= 0:
            return self._empty_result()
        windows = np.stack([surfaces[i:i + w] for i in range(steps)])
        latents, groups, heights, _ = self.predict_from_windows(windows, dt)
        return RolloutResult(
            latents=latents, groups=groups, surface_heights=heights,
            stations=self.resampler.stations,
            target_indices=np.arange(w, w + steps),
        )

    def rollout_closed_loop(self, initial_window, dt, steps):
        """Feed predicted surfaces back into the observation window."""
        window = np.asarray(initial_window, dtype=np.float64).copy()
        w = self.window
        if window.shape[0] != w:
            raise ValueError(f"initial window must hold {w} observations")
        if steps <= 0:
            return self._empty_result()
        stations = self.resampler.stations
        latents, heights = [], []
        group_rows = {g: [] for g in GROUP_NAMES}
        for step in range(steps):
            try:
                latent, groups, h, _ = self.predict_from_windows(window[None], dt)
            except mp.DivergenceError as e:
                raise mp.DivergenceError(f"{e} (rollout step {step})") from None
            latents.append(latent[0])
            heights.append(h[0])
            for g in GROUP_NAMES:
                group_rows[g].append(groups[g][0])
            nxt = np.concatenate([stations, h[0]])
            window = np.vstack([window[1:], nxt])
        return RolloutResult(
            latents=np.stack(latents),
            groups={g: np.stack(group_rows[g]) for g in GROUP_NAMES},
            surface_heights=np.stack(heights),
            stations=stations,
            target_indices=np.arange(w, w + steps),
        )

    def _empty_result(self):
        d = self.net.config.latent_dim
        return RolloutResult(
            latents=np.empty((0, d)),
            groups={g: np.empty((0, self.bank.aes[g].input_dim))
                    for g in GROUP_NAMES},
            surface_heights=np.empty((0, self.geometry.surface_points)),
            stations=self.resampler.stations,
            target_indices=np.empty(0, dtype=np.intp),
        )

    # A model lives in a directory: one checkpoint per stage plus a JSON
    # manifest with the geometry, the reduced-state layout and the source
    # sampling interval.

    def save(self, dirpath):
        import json
        from pathlib import Path

        d = Path(dirpath)
        d.mkdir(parents=True, exist_ok=True)
        self.bank.save(d / "ae.gsnn")
        ndgrad.save_params(d / "gru.gsnn", self.encoder.params)
        ndgrad.save_params(d / "spnn.gsnn", self.net.params)
        manifest = {
            "geometry": self.geometry.to_json(),
            "dt_source": self.dt_source,
            "latent": self.bank.latent_map.to_json(),
            "lambda_mse": self.net.config.lambda_mse,
        }
        (d / "model.json").write_text(json.dumps(manifest, indent=2,
                                                 sort_keys=True),
                                      encoding="utf-8")

    @classmethod
    def load(cls, dirpath):
        import json
        from pathlib import Path

        d = Path(dirpath)
        manifest = json.loads((d / "model.json").read_text(encoding="utf-8"))
        bank = AutoencoderBank.load(d / "ae.gsnn")
        encoder = SurfaceEncoder.from_params(ndgrad.load_params(d / "gru.gsnn"))
        net = SpnnNet.from_params(ndgrad.load_params(d / "spnn.gsnn"),
                                  lambda_mse=manifest.get("lambda_mse", 1e3))
        return cls(bank, encoder, net,
                   Geometry.from_json(manifest["geometry"]),
                   manifest["dt_source"])
