from __future__ import annotations

from collections.abc import Callable

import numpy as np

from glumind.errors import ConfigurationError
from glumind.tensor.core import Tape, Tensor, backward, no_grad
from glumind.tensor.params import ParamStore


def grad_check(
    f: Callable[[ParamStore], Tensor],
    params: ParamStore,
    eps: float = 1e-6,
    names: list[str] | None = None,
) -> float:
    """Largest relative disagreement between backward() and central differences.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigurationError(f"eps {eps} outside [1e-7, 1e-3]")
    tape = Tape()
    with tape:
        loss = f(params)
    analytic = backward(loss, tape, params)
    worst = 0.0
    with no_grad():
        for name in names or list(params):
            p = params[name]
            p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(f(params).data)
                flat[i] = orig - eps
                down = float(f(params).data)
                flat[i] = orig
                num = (up - down) / (2 * eps)
                a = float(a_flat[i])
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                worst = max(worst, err)
    return worst
