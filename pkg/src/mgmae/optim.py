"""Adam with global-norm gradient clipping over named numpy parameters."""

from __future__ import annotations

import numpy as np


def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns new arrays (inputs may alias each other) and the pre-clip norm.
    """
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    factor = max_norm / norm if norm > max_norm else 1.0
    return {k: g * factor for k, g in grads.items()}, norm


class Adam:
    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        """Update every parameter in place; names missing from ``grads`` get a zero gradient."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1 ** self.t)
        inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - b2 ** self.t)
        for name, p in self.params.items():
            m, v = self.m[name], self.v[name]
            g = grads.get(name)
            m *= b1
            v *= b2
            if g is not None:
                m += (1.0 - b1) * g
                v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v)
            denom *= inv_sqrt_c2
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= step_size
            p -= denom
