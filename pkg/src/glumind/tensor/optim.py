from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from glumind.errors import ConfigurationError
from glumind.tensor.params import ParamStore


def adamw_step(
    params: ParamStore,
    grads: Mapping[str, np.ndarray],
    state: dict[str, tuple[np.ndarray, np.ndarray]],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
    step: int = 1,
) -> ParamStore:
    """One AdamW update, in place.

    Weight decay is decoupled and applied to the parameter before the moment
    update.  ``state`` maps names to (first moment, second moment) and is
    mutated.
    """
    if lr <= 0:
        raise ConfigurationError("lr must be positive")
    if step < 1:
        raise ConfigurationError("step counts from 1")
    b1, b2 = betas
    bc1 = 1.0 - b1**step
    bc2 = 1.0 - b2**step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if weight_decay:
            p.data = p.data - lr * weight_decay * p.data
        m, v = state.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state[name] = (m, v)
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


class AdamW:
    def __init__(self, params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.t = 0

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        adamw_step(
            self.params, grads, self.state, self.lr, self.betas, self.eps, self.weight_decay, self.t
        )
