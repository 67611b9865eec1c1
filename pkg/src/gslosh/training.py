"""Shared full-batch training loop."""

from __future__ import annotations

import math

from . import ndgrad


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


def fit(params, loss_fn, *, epochs, lr, weight_decay=0.0, log=None):
    """Minimize the traced scalar produced by `loss_fn`.

    Deterministic given parameters and data: one full-batch step per
    epoch, no shuffling. Returns the per-epoch loss history.
    """
    opt = ndgrad.Adam(params, lr=lr, weight_decay=weight_decay)
    history = []
    for epoch in range(epochs):
        with ndgrad.trace() as tape:
            loss = loss_fn()
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingDiverged(epoch)
        history.append(value)
        grads = tape.gradients(loss, params)
        opt.step(grads)
        if log is not None and (epoch % 200 == 0 or epoch == epochs - 1):
            log(f"epoch {epoch}: loss {value:.6g}")
    return history
