"""Network building blocks: dense layers, a fused GRU cell, initializers.

The forward functions accept a single feature vector or a batch with one
leading axis and work traced or untraced. The GRU cell is a single tape
node with a hand-written backward, which keeps sequence training cheap.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _make, astensor

ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh")


def xavier_uniform(rng, n_out, n_in):
    """Fan-balanced uniform init."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def _as_batch(x):
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"expected a vector or a batch of vectors, got {x.shape}")


def _act_forward(z, activation):
    if activation == "linear":
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if activation == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {activation!r}")


def _act_backward(g, y, activation):
    """Gradient through the activation, using the activation OUTPUT y."""
    if activation == "linear":
        return g
    if activation == "relu":
        return g * (y > 0)
    if activation == "sigmoid":
        return g * y * (1.0 - y)
    if activation == "tanh":
        return g * (1.0 - y * y)
    raise ValueError(f"unknown activation {activation!r}")


def dense_forward(x, w, b, activation="linear"):
    """y = act(W x + b) for a vector x, or row-wise for a batch.

    W has shape (n_out, n_in), b has shape (n_out,).
    """
    x, w, b = astensor(x), astensor(w), astensor(b)
    if w.data.ndim != 2:
        raise ShapeError(f"weight must be a matrix, got {w.shape}")
    xb, squeeze = _as_batch(x.data)
    if xb.shape[1] != w.shape[1]:
        raise ShapeError(
            f"dense input {x.shape} does not match weight {w.shape}"
        )
    if b.data.shape != (w.shape[0],):
        raise ShapeError(f"bias {b.shape} does not match weight {w.shape}")
    y = _act_forward(xb @ w.data.T + b.data, activation)
    out = y[0] if squeeze else y

    def vjp(g, needs):
        gb = g[None, :] if squeeze else g
        dz = _act_backward(gb, y, activation)
        gx = gw = gbias = None
        if needs[0]:
            gx = dz @ w.data
            if squeeze:
                gx = gx[0]
        if needs[1]:
            gw = dz.T @ xb
        if needs[2]:
            gbias = dz.sum(axis=0)
        return [gx, gw, gbias]

    return _make(out, (x, w, b), vjp)


GRU_PARAM_KEYS = ("wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn")


def gru_cell_init(rng, n_in, n_hidden):
    """Gate weights for one cell: update (z), reset (r), candidate (n)."""
    p = {}
    for gate in "zrn":
        p[f"w{gate}"] = xavier_uniform(rng, n_hidden, n_in)
        p[f"u{gate}"] = xavier_uniform(rng, n_hidden, n_hidden)
        p[f"b{gate}"] = np.zeros(n_hidden)
    return p


def gru_cell_forward(x, h_prev, params):
    """One step of a gated recurrent unit.

    z = sigmoid(Wz x + Uz h + bz)
    r = sigmoid(Wr x + Ur h + br)
    n = tanh(Wn x + Un (r * h) + bn)
    h' = (1 - z) * n + z * h

    `params` maps the keys in GRU_PARAM_KEYS to tensors; x and h_prev may
    be single vectors or batches.
    """
    x, h_prev = astensor(x), astensor(h_prev)
    p = {k: astensor(params[k]) for k in GRU_PARAM_KEYS}
    xb, squeeze = _as_batch(x.data)
    hb, hsq = _as_batch(h_prev.data)
    if squeeze != hsq or xb.shape[0] != hb.shape[0]:
        raise ShapeError(
            f"input {x.shape} and hidden state {h_prev.shape} disagree on batch"
        )
    n_h = p["uz"].shape[0]
    if xb.shape[1] != p["wz"].shape[1] or hb.shape[1] != n_h:
        raise ShapeError(
            f"gru cell got input {x.shape}, hidden {h_prev.shape}, "
            f"weights {p['wz'].shape}/{p['uz'].shape}"
        )

    z = 1.0 / (1.0 + np.exp(-(xb @ p["wz"].data.T + hb @ p["uz"].data.T + p["bz"].data)))
    r = 1.0 / (1.0 + np.exp(-(xb @ p["wr"].data.T + hb @ p["ur"].data.T + p["br"].data)))
    rh = r * hb
    n = np.tanh(xb @ p["wn"].data.T + rh @ p["un"].data.T + p["bn"].data)
    h_new = (1.0 - z) * n + z * hb
    out = h_new[0] if squeeze else h_new

    parents = (x, h_prev) + tuple(p[k] for k in GRU_PARAM_KEYS)

    def vjp(g, needs):
        gb = g[None, :] if squeeze else g
        dn = gb * (1.0 - z)
        dz_gate = gb * (hb - n)
        dh = gb * z

        da_n = dn * (1.0 - n * n)
        da_z = dz_gate * z * (1.0 - z)
        d_rh = da_n @ p["un"].data
        dr = d_rh * hb
        dh = dh + d_rh * r
        da_r = dr * r * (1.0 - r)
        dh = dh + da_z @ p["uz"].data + da_r @ p["ur"].data

        dx = None
        if needs[0]:
            dx = da_z @ p["wz"].data + da_r @ p["wr"].data + da_n @ p["wn"].data
            if squeeze:
                dx = dx[0]
        if squeeze and needs[1]:
            dh_out = dh[0]
        else:
            dh_out = dh
        grads = [dx, dh_out if needs[1] else None]
        gate_grads = {
            "wz": lambda: da_z.T @ xb,
            "uz": lambda: da_z.T @ hb,
            "bz": lambda: da_z.sum(axis=0),
            "wr": lambda: da_r.T @ xb,
            "ur": lambda: da_r.T @ hb,
            "br": lambda: da_r.sum(axis=0),
            "wn": lambda: da_n.T @ xb,
            "un": lambda: da_n.T @ rh,
            "bn": lambda: da_n.sum(axis=0),
        }
        for i, key in enumerate(GRU_PARAM_KEYS):
            grads.append(gate_grads[key]() if needs[2 + i] else None)
        return grads

    return _make(out, parents, vjp)
