"""Adam with decoupled weight decay, honoring parameter freeze flags."""

from __future__ import annotations

import numpy as np


class Adam:
    """Bias-corrected Adam; weight decay is applied as lr * wd * theta,
    separate from the gradient moments. Frozen entries are never updated,
    and no moment buffers are allocated for them.
    """

    def __init__(self, params, lr, weight_decay=0.0, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {}
        self._v = {}
        for name in params.trainable_names():
            shape = params[name].shape
            self._m[name] = np.zeros(shape)
            self._v[name] = np.zeros(shape)

    def step(self, grads):
        """Apply one update from a dict name -> gradient array."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            if self.params.is_frozen(name):
                continue
            theta = self.params[name].data
            if g.shape != theta.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} of shape {theta.shape}"
                )
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                theta -= self.lr * self.weight_decay * theta
            theta -= self.lr * update
