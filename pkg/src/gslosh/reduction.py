"""Per-group sparse autoencoders and the reduced-state bookkeeping.

Each field group gets its own fully connected autoencoder with a linear
bottleneck. An L1 penalty on the bottleneck activations concentrates the
information in few units; after training, the units whose mean absolute
activation clears a threshold are retained and concatenated across the
groups into the reduced state the integrator works on. Dropped units are
replaced by their training-mean activation when decoding, which makes
the truncation nearly lossless.

Inputs are standardized per group (per-feature center, one global scale)
with constants stored as frozen parameters, so checkpoints are
self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import ndgrad
from .ndgrad import ParameterSet, Tensor
from .state import GROUP_NAMES, LatentMap
from .training import fit


@dataclass
class AutoencoderSpec:
    group: str
    widths: list[int]
    bottleneck: int
    l1_weight: float = 0.001   # bottleneck sparsity, usual range 0.001..0.005
    lr: float = 1e-4
    wd: float = 1e-5
    epochs: int = 10000


# Source-model defaults for the full-resolution configuration; desk-scale
# runs override widths and epochs through the run config.
SOURCE_AE_DEFAULTS = {
    "q": AutoencoderSpec("q", [120, 120], 20, lr=1e-4, wd=1e-6, epochs=10000),
    "v": AutoencoderSpec("v", [200, 200, 200, 200], 20, lr=1e-4, wd=1e-5, epochs=10000),
    "e": AutoencoderSpec("e", [40, 40, 40], 10, lr=1e-4, wd=1e-5, epochs=10000),
    "sigma": AutoencoderSpec("sigma", [200, 200, 200], 20, lr=1e-4, wd=1e-5, epochs=10000),
    "tau": AutoencoderSpec("tau", [200, 200, 200], 20, lr=1e-3, wd=1e-6, epochs=10000),
}


def ae_loss(s, s_hat, code, l1_weight):
    """Reconstruction MSE plus the sparsity penalty.

    The MSE is the mean over every scalar entry of the batch; the penalty
    is the per-sample L1 norm of the bottleneck code, averaged over the
    batch.
    """
    s, s_hat, code = ndgrad.astensor(s), ndgrad.astensor(s_hat), ndgrad.astensor(code)
    n = code.data.shape[0] if code.data.ndim == 2 else 1
    mse = ndgrad.mean_all(ndgrad.square(ndgrad.sub(s, s_hat)))
    return ndgrad.add(mse, ndgrad.scale(ndgrad.l1_sum(code), l1_weight / n))


class GroupAutoencoder:
    """Encoder/decoder pair for one field group.

    Layer stack: standardize, dense(relu) per width, linear bottleneck;
    the decoder mirrors the encoder and ends in a linear map back to the
    group dimension, followed by de-standardization.
    """

    def __init__(self, params: ParameterSet, widths, bottleneck):
        self.params = params
        self.widths = list(widths)
        self.bottleneck = bottleneck

    @classmethod
    def build(cls, rng, input_dim, spec: AutoencoderSpec, center, scale):
        params = ParameterSet()
        params.add("norm.center", np.asarray(center, dtype=np.float64), frozen=True)
        params.add("norm.scale", np.asarray(float(scale)), frozen=True)
        dims = [input_dim] + list(spec.widths) + [spec.bottleneck]
        for i in range(len(dims) - 1):
            params.add(f"enc{i}.w", ndgrad.xavier_uniform(rng, dims[i + 1], dims[i]))
            params.add(f"enc{i}.b", np.zeros(dims[i + 1]))
        rev = dims[::-1]
        for i in range(len(rev) - 1):
            params.add(f"dec{i}.w", ndgrad.xavier_uniform(rng, rev[i + 1], rev[i]))
            params.add(f"dec{i}.b", np.zeros(rev[i + 1]))
        return cls(params, spec.widths, spec.bottleneck)

    @classmethod
    def from_params(cls, params: ParameterSet):
        widths = []
        i = 0
        while f"enc{i}.w" in params:
            widths.append(params[f"enc{i}.w"].shape[0])
            i += 1
        return cls(params, widths[:-1], widths[-1])

    @property
    def input_dim(self):
        return self.params["enc0.w"].shape[1]

    def _n_layers(self):
        return len(self.widths) + 1

    def encode(self, s):
        p = self.params
        h = ndgrad.scale(
            ndgrad.sub(ndgrad.astensor(s), p["norm.center"]),
            1.0 / float(p["norm.scale"].data),
        )
        n = self._n_layers()
        for i in range(n):
            act = "linear" if i == n - 1 else "relu"
            h = ndgrad.dense_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"], act)
        return h

    def decode(self, code):
        p = self.params
        h = ndgrad.astensor(code)
        n = self._n_layers()
        for i in range(n):
            act = "linear" if i == n - 1 else "relu"
            h = ndgrad.dense_forward(h, p[f"dec{i}.w"], p[f"dec{i}.b"], act)
        return ndgrad.add(
            ndgrad.scale(h, float(p["norm.scale"].data)), p["norm.center"]
        )

    def forward(self, s):
        """(bottleneck code, reconstruction) for a snapshot or a batch."""
        code = self.encode(s)
        return code, self.decode(code)


def train_autoencoder(data, spec: AutoencoderSpec, seed, log=None):
    """Fit one group autoencoder on rows of `data`; returns (ae, history)."""
    data = np.asarray(data, dtype=np.float64)
    center = data.mean(axis=0)
    spread = float(np.sqrt(np.mean((data - center) ** 2)))
    scale = spread if spread > 1e-12 else 1.0
    rng = np.random.default_rng(seed)
    ae = GroupAutoencoder.build(rng, data.shape[1], spec, center, scale)

    target = Tensor((data - center) / scale)

    def loss_fn():
        code = ae.encode(data)
        p = ae.params
        h = code
        n = ae._n_layers()
        for i in range(n):
            act = "linear" if i == n - 1 else "relu"
            h = ndgrad.dense_forward(h, p[f"dec{i}.w"], p[f"dec{i}.b"], act)
        # Loss in standardized space keeps the sparsity weight meaningful
        # across groups with very different physical magnitudes.
        return ae_loss(target, h, code, spec.l1_weight)

    history = fit(ae.params, loss_fn, epochs=spec.epochs, lr=spec.lr,
                  weight_decay=spec.wd, log=log)
    return ae, history


def select_active_latents(codes_by_group, threshold, target_total=None):
    """Retained bottleneck units by mean-absolute-activation thresholding.

    A unit survives when its mean |activation| over the training codes
    exceeds threshold * (largest mean activation across all groups). When
    `target_total` is given, the threshold is swept by bisection until
    exactly that many units survive; ties are broken by activation rank.
    Returns a LatentMap.
    """
    means = {g: np.abs(codes_by_group[g]).mean(axis=0) for g in GROUP_NAMES}
    gmax = max(m.max() for m in means.values())
    if gmax <= 0:
        raise ValueError("all bottleneck activations are zero")

    def survivors(thr):
        return {g: np.nonzero(means[g] > thr * gmax)[0] for g in GROUP_NAMES}

    def count(sel):
        return sum(len(v) for v in sel.values())

    if target_total is None:
        chosen = survivors(threshold)
    else:
        total_units = sum(m.size for m in means.values())
        if target_total > total_units:
            raise ValueError(
                f"asked for {target_total} active units but the bottlenecks "
                f"only have {total_units}"
            )
        lo, hi = 0.0, 1.0 + 1e-12
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            c = count(survivors(mid))
            if c > target_total:
                lo = mid
            elif c < target_total:
                hi = mid
            else:
                break
        chosen = survivors(mid)
        if count(chosen) != target_total:
            # Equal activation values straddle the threshold; fall back to
            # a deterministic rank cut at the same ordering.
            ranked = sorted(
                ((means[g][i], g, i) for g in GROUP_NAMES
                 for i in range(means[g].size)),
                key=lambda t: (-t[0], GROUP_NAMES.index(t[1]), t[2]),
            )
            keep = ranked[:target_total]
            chosen = {
                g: np.sort([i for _, gg, i in keep if gg == g]).astype(np.intp)
                for g in GROUP_NAMES
            }

    fill = {g: codes_by_group[g].mean(axis=0) for g in GROUP_NAMES}
    return LatentMap(active={g: np.asarray(chosen[g], dtype=np.intp)
                             for g in GROUP_NAMES},
                     fill=fill)


class AutoencoderBank:
    """The five group autoencoders plus the latent placement."""

    def __init__(self, aes: dict[str, GroupAutoencoder], latent_map: LatentMap):
        self.aes = aes
        self.latent_map = latent_map

    @property
    def latent_dim(self):
        return self.latent_map.dim

    def encode_state(self, groups):
        """dict group -> [N, D_g] arrays to reduced states [N, d]."""
        parts = []
        for g in GROUP_NAMES:
            code = self.aes[g].encode(groups[g]).data
            parts.append(code[..., self.latent_map.active[g]])
        return np.concatenate(parts, axis=-1)

    def decode_group(self, x, group):
        """Reduced state (tensor or array) to one raw field group."""
        m = self.latent_map
        sl = m.slices[group]
        xs = ndgrad.slice_last(ndgrad.astensor(x), sl.start, sl.stop)
        code = ndgrad.scatter_into(xs, m.active[group], m.fill[group])
        return self.aes[group].decode(code)

    def decode_state(self, x):
        """Reduced states [N, d] to dict of raw group arrays."""
        return {g: self.decode_group(x, g).data for g in GROUP_NAMES}

    # Persistence: one checkpoint holds all five autoencoders plus the
    # latent map (as tensors), so the file alone rebuilds the bank.

    def to_params(self) -> ParameterSet:
        merged = ParameterSet()
        for g in GROUP_NAMES:
            merged.merge(self.aes[g].params, prefix=f"{g}.")
        for g in GROUP_NAMES:
            merged.add(f"latent.{g}.active",
                       self.latent_map.active[g].astype(np.float64), frozen=True)
            merged.add(f"latent.{g}.fill", self.latent_map.fill[g], frozen=True)
        return merged

    @classmethod
    def from_params(cls, merged: ParameterSet):
        aes = {}
        active, fill = {}, {}
        for g in GROUP_NAMES:
            aes[g] = GroupAutoencoder.from_params(merged.subset(f"{g}."))
            active[g] = merged[f"latent.{g}.active"].data.astype(np.intp)
            fill[g] = merged[f"latent.{g}.fill"].data.copy()
        return cls(aes, LatentMap(active=active, fill=fill))

    def save(self, path):
        ndgrad.save_params(path, self.to_params())

    @classmethod
    def load(cls, path):
        return cls.from_params(ndgrad.load_params(path))


def group_reconstruction_error(bank: AutoencoderBank, groups):
    """Relative L2 reconstruction error per group through the truncated latent."""
    x = bank.encode_state(groups)
    recon = bank.decode_state(x)
    out = {}
    for g in GROUP_NAMES:
        num = np.linalg.norm(recon[g] - groups[g])
        den = np.linalg.norm(groups[g])
        out[g] = num / den if den > 0 else num
    return out
