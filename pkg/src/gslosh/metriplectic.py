"""Structural core of the learned integrator.

A network step emits one flat vector per state which is unpacked into the
operator quadruple (L, M, DE, DS):

* L is assembled as A - A^T from the strict lower triangle, so it is
  skew-symmetric by construction,
* M is assembled as B B^T from a lower-triangular factor, so it is
  symmetric positive semidefinite by construction,
* DE and DS are the discrete energy and entropy gradients.

The forward-Euler update x' = x + dt (L DE + M DS) is then admissible in
the sense that energy exchange through L is exactly antisymmetric and
dissipation through M is never negative, regardless of training quality.
The degeneracy residuals ||L DS||^2 and ||M DE||^2 quantify how far the
quadruple is from conserving energy and from producing entropy
monotonically; they are penalized during training, never projected away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DivergenceError(RuntimeError):
    """A state stopped being finite; the learned model has blown up."""


def packed_length(d):
    """Flat vector length for latent dimension d."""
    return d * (d - 1) // 2 + d * (d + 1) // 2 + 2 * d


@dataclass
class PackingLayout:
    """Index bookkeeping shared by the plain and the traced unpacking."""

    d: int
    skew_rows: np.ndarray
    skew_cols: np.ndarray
    tri_rows: np.ndarray
    tri_cols: np.ndarray
    n_skew: int
    n_tri: int

    @classmethod
    def for_dim(cls, d):
        sr, sc = np.tril_indices(d, -1)
        tr, tc = np.tril_indices(d, 0)
        return cls(d, sr, sc, tr, tc, sr.size, tr.size)

    @property
    def total(self):
        return self.n_skew + self.n_tri + 2 * self.d

    def split_points(self):
        i1 = self.n_skew
        i2 = i1 + self.n_tri
        return i1, i2, i2 + self.d, i2 + 2 * self.d


@dataclass
class GenericOperators:
    """One state's operator quadruple. `b_factor` keeps the triangular
    factor of M so that packing is lossless."""

    L: np.ndarray
    M: np.ndarray
    DE: np.ndarray
    DS: np.ndarray
    b_factor: np.ndarray | None = None


def unpack_operators_traced(packed, layout: PackingLayout):
    """Differentiable unpacking of a batch of flat vectors.

    `packed` is an autodiff tensor of shape [..., layout.total]. Returns a
    dict of tensors L, M, DE, DS plus the degeneracy products LDS and MDE,
    all built from the same constructive layout as unpack_operators.
    """
    from . import ndgrad

    i1, i2, i3, i4 = layout.split_points()
    d = layout.d
    a = ndgrad.fill_tril(ndgrad.slice_last(packed, 0, i1), d, strict=True)
    l = ndgrad.sub(a, ndgrad.transpose_last2(a))
    b = ndgrad.fill_tril(ndgrad.slice_last(packed, i1, i2), d, strict=False)
    m = ndgrad.matmul(b, ndgrad.transpose_last2(b))
    de = ndgrad.slice_last(packed, i2, i3)
    ds = ndgrad.slice_last(packed, i3, i4)
    return {
        "L": l, "M": m, "DE": de, "DS": ds,
        "LDS": ndgrad.matvec(l, ds),
        "MDE": ndgrad.matvec(m, de),
    }


def euler_step_traced(x, ops, dt):
    """Differentiable x + dt (L DE + M DS) on a batch of states."""
    from . import ndgrad

    drift = ndgrad.add(ndgrad.matvec(ops["L"], ops["DE"]),
                       ndgrad.matvec(ops["M"], ops["DS"]))
    return ndgrad.add(ndgrad.astensor(x), ndgrad.scale(drift, dt))


def unpack_operators(p, d) -> GenericOperators:
    p = np.asarray(p, dtype=np.float64)
    layout = PackingLayout.for_dim(d)
    if p.shape != (layout.total,):
        raise ValueError(
            f"packed operator vector for d={d} must have length "
            f"{layout.total}, got {p.shape}"
        )
    i1, i2, i3, i4 = layout.split_points()
    a = np.zeros((d, d))
    a[layout.skew_rows, layout.skew_cols] = p[:i1]
    b = np.zeros((d, d))
    b[layout.tri_rows, layout.tri_cols] = p[i1:i2]
    return GenericOperators(
        L=a - a.T,
        M=b @ b.T,
        DE=p[i2:i3].copy(),
        DS=p[i3:i4].copy(),
        b_factor=b,
    )


def pack_operators(ops: GenericOperators) -> np.ndarray:
    """Inverse of unpack_operators (bit-exact given the kept factor)."""
    d = ops.L.shape[0]
    layout = PackingLayout.for_dim(d)
    if ops.b_factor is not None:
        b = ops.b_factor
    else:
        b = np.linalg.cholesky(ops.M) if np.any(ops.M) else np.zeros_like(ops.M)
    return np.concatenate([
        ops.L[layout.skew_rows, layout.skew_cols],
        b[layout.tri_rows, layout.tri_cols],
        ops.DE,
        ops.DS,
    ])


def euler_step(x, ops: GenericOperators, dt):
    """x' = x + dt (L DE + M DS). dt = 0 is allowed and returns x."""
    if dt < 0:
        raise ValueError(f"time step must be non-negative, got {dt}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != ops.DE.shape:
        raise ValueError(f"state {x.shape} does not match operators {ops.DE.shape}")
    with np.errstate(invalid="ignore"):
        out = x + dt * (ops.L @ ops.DE + ops.M @ ops.DS)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("integration step produced a non-finite state")
    return out


def degeneracy_residual(ops: GenericOperators):
    """(||L DS||^2, ||M DE||^2), both zero for a consistent quadruple."""
    r_l = float(np.sum((ops.L @ ops.DS) ** 2))
    r_m = float(np.sum((ops.M @ ops.DE) ** 2))
    return r_l, r_m


def thermo_rates(ops: GenericOperators):
    """Instantaneous (energy_rate, entropy_rate) along the update direction.

    With exact degeneracy the energy rate vanishes (skewness kills the
    DE^T L DE part, M DE = 0 kills the rest) and the entropy rate reduces
    to DS^T M DS >= 0.
    """
    xdot = ops.L @ ops.DE + ops.M @ ops.DS
    return float(ops.DE @ xdot), float(ops.DS @ xdot)
