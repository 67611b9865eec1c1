"""Dense float64 tensors with tape-based reverse-mode differentiation.

All arithmetic runs on numpy arrays. When a :class:`Tape` is active
(see :func:`trace`), every operation appends a node to the tape so that
:meth:`Tape.gradients` can replay the recorded program backwards and
accumulate vector-Jacobian products. Outside a trace the same functions
compute plain values and keep no references to their inputs, so long
inference loops do not grow a graph.

Conventions:

* everything is float64, row-major,
* batch dimensions lead, feature dimensions trail,
* gradients are returned as plain ndarrays keyed by parameter name.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class GradientError(RuntimeError):
    """Backward pass requested on an invalid node (e.g. non-scalar loss)."""


_ACTIVE_TAPE = None


class Tensor:
    """A node in the evaluation trace: a value plus optional provenance.

    Leaf tensors (parameters, inputs) have no parents. Interior nodes
    remember their parents and a vector-Jacobian closure only while a
    tape is active.
    """

    __slots__ = ("data", "name", "_parents", "_vjp")

    def __init__(self, data, name=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.name = name
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """A leaf tensor sharing this tensor's value."""
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # Small operator sugar; the module-level functions are the real API.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def astensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations for one traced evaluation."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise GradientError("tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def gradients(self, loss, params):
        """Accumulate d(loss)/d(theta) for every non-frozen entry of `params`.

        `loss` must be a scalar node recorded on this tape. Returns a dict
        name -> ndarray covering exactly the reachable, non-frozen entries;
        frozen parameters never appear.
        """
        if loss.data.size != 1:
            raise GradientError(
                f"loss must be a scalar, got shape {loss.data.shape}"
            )
        wanted = {}
        for name in params.names():
            if not params.is_frozen(name):
                wanted[id(params[name])] = name

        # Mark the nodes through which a wanted leaf is reachable, so the
        # backward sweep can skip frozen subtrees entirely.
        required = set(wanted)
        for node in self._nodes:
            if any(id(p) in required for p in node._parents):
                required.add(id(node))

        acc = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g = acc.pop(id(node), None)
            if g is None or node._vjp is None:
                continue
            parents = node._parents
            needs = [
                (id(p) in required) or (id(p) in wanted) for p in parents
            ]
            if not any(needs):
                continue
            parent_grads = node._vjp(g, needs)
            for p, pg, need in zip(parents, parent_grads, needs):
                if not need or pg is None:
                    continue
                pid = id(p)
                if pid in acc:
                    acc[pid] = acc[pid] + pg
                else:
                    acc[pid] = pg

        out = {}
        for pid, name in wanted.items():
            if pid in acc:
                out[name] = acc[pid]
        return out


def trace():
    """Context manager activating a fresh tape."""
    return Tape()


def _make(data, parents, vjp):
    out = Tensor(data)
    if _ACTIVE_TAPE is not None:
        out._parents = parents
        out._vjp = vjp
        _ACTIVE_TAPE._nodes.append(out)
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(a, b, fwd, dA, dB):
    a, b = astensor(a), astensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"operands {a.shape} and {b.shape}: {e}") from None

    def vjp(g, needs):
        out = [None, None]
        if needs[0]:
            out[0] = _unbroadcast(dA(g, a.data, b.data), a.shape)
        if needs[1]:
            out[1] = _unbroadcast(dB(g, a.data, b.data), b.shape)
        return out

    return _make(data, (a, b), vjp)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scale(a, c):
    """Multiply by a python float constant."""
    a = astensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g, needs: [g * c if needs[0] else None])


def matmul(a, b):
    """Matrix product for 2-D operands or batched 3-D operands."""
    a, b = astensor(a), astensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} @ {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")

    def vjp(g, needs):
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if needs[1]:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return [ga, gb]

    return _make(data, (a, b), vjp)


def matvec(a, x):
    """Apply matrices to vectors over matching leading axes."""
    a, x = astensor(a), astensor(x)
    if a.shape[-1] != x.shape[-1]:
        raise ShapeError(f"matvec shapes do not conform: {a.shape} . {x.shape}")
    data = np.einsum("...mn,...n->...m", a.data, x.data)

    def vjp(g, needs):
        ga = gx = None
        if needs[0]:
            ga = np.einsum("...m,...n->...mn", g, x.data)
            ga = _unbroadcast(ga, a.shape)
        if needs[1]:
            gx = np.einsum("...mn,...m->...n", a.data, g)
            gx = _unbroadcast(gx, x.shape)
        return [ga, gx]

    return _make(data, (a, x), vjp)


def transpose_last2(a):
    a = astensor(a)
    data = np.swapaxes(a.data, -1, -2)
    return _make(
        data, (a,), lambda g, needs: [np.swapaxes(g, -1, -2) if needs[0] else None]
    )


def fill_tril(flat, d, strict=False):
    """Scatter a flat vector into the (strict) lower triangle of d x d zeros.

    Entries are laid out row by row; leading axes are preserved.
    """
    flat = astensor(flat)
    rows, cols = np.tril_indices(d, -1 if strict else 0)
    k = rows.size
    if flat.shape[-1] != k:
        raise ShapeError(
            f"triangle fill for d={d} needs {k} entries, got {flat.shape[-1]}"
        )
    data = np.zeros(flat.shape[:-1] + (d, d))
    data[..., rows, cols] = flat.data

    def vjp(g, needs):
        return [g[..., rows, cols] if needs[0] else None]

    return _make(data, (flat,), vjp)


def slice_last(a, lo, hi):
    a = astensor(a)
    data = a.data[..., lo:hi]

    def vjp(g, needs):
        if not needs[0]:
            return [None]
        z = np.zeros(a.shape)
        z[..., lo:hi] = g
        return [z]

    return _make(data, (a,), vjp)


def gather_last(a, idx):
    """Select columns `idx` (unique indices) along the last axis."""
    a = astensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[..., idx]

    def vjp(g, needs):
        if not needs[0]:
            return [None]
        z = np.zeros(a.shape)
        z[..., idx] = g
        return [z]

    return _make(data, (a,), vjp)


def scatter_into(values, idx, base):
    """Place `values` at columns `idx` of a constant `base` row vector.

    The base supplies the entries not covered by `idx` and receives no
    gradient; only `values` is differentiated.
    """
    values = astensor(values)
    idx = np.asarray(idx, dtype=np.intp)
    base = np.asarray(base, dtype=np.float64)
    shape = values.shape[:-1] + base.shape
    data = np.broadcast_to(base, shape).copy()
    data[..., idx] = values.data

    def vjp(g, needs):
        return [g[..., idx] if needs[0] else None]

    return _make(data, (values,), vjp)


def relu(a):
    a = astensor(a)
    data = np.maximum(a.data, 0.0)

    def vjp(g, needs):
        return [g * (data > 0) if needs[0] else None]

    return _make(data, (a,), vjp)


def sigmoid(a):
    a = astensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g, needs):
        return [g * data * (1.0 - data) if needs[0] else None]

    return _make(data, (a,), vjp)


def tanh(a):
    a = astensor(a)
    data = np.tanh(a.data)

    def vjp(g, needs):
        return [g * (1.0 - data * data) if needs[0] else None]

    return _make(data, (a,), vjp)


def square(a):
    a = astensor(a)
    return _make(
        a.data * a.data,
        (a,),
        lambda g, needs: [2.0 * g * a.data if needs[0] else None],
    )


def sum_all(a):
    a = astensor(a)
    return _make(
        np.asarray(a.data.sum()),
        (a,),
        lambda g, needs: [np.broadcast_to(g, a.shape).copy() if needs[0] else None],
    )


def mean_all(a):
    a = astensor(a)
    n = a.data.size
    return _make(
        np.asarray(a.data.mean()),
        (a,),
        lambda g, needs: [
            np.broadcast_to(g / n, a.shape).copy() if needs[0] else None
        ],
    )


def l1_sum(a):
    """Sum of absolute values (subgradient 0 at the kink)."""
    a = astensor(a)
    return _make(
        np.asarray(np.abs(a.data).sum()),
        (a,),
        lambda g, needs: [g * np.sign(a.data) if needs[0] else None],
    )
