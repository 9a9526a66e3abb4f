"""Randomised per-op gradient-check cases shared by the unit and acceptance tests."""

import numpy as np

from glumind import tensor as tc
from glumind.tensor import ParamStore, grad_check


def _dims(rng, k, lo=1, hi=6):
    return [int(v) for v in rng.integers(lo, hi + 1, size=k)]


def _weighted(out, rng):
    # random output weights make every output coordinate matter in the scalar
    w = tc.Tensor(rng.normal(size=out.shape))
    return tc.sum_all(tc.mul(out, w))


def case_add(rng):
    r, c = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(r, c)), "b": rng.normal(size=(1, c))})
    return p, lambda q: _weighted(tc.add(q["a"], q["b"]), np.random.default_rng(1))


def case_sub(rng):
    r, c = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(r, c)), "b": rng.normal(size=(r, 1))})
    return p, lambda q: _weighted(tc.sub(q["a"], q["b"]), np.random.default_rng(2))


def case_mul(rng):
    r, c = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(r, c)), "b": rng.normal(size=(r, c))})
    return p, lambda q: _weighted(tc.mul(q["a"], q["b"]), np.random.default_rng(3))


def case_scale(rng):
    r, c = _dims(rng, 2)
    k = float(rng.normal())
    p = ParamStore({"a": rng.normal(size=(r, c))})
    return p, lambda q: _weighted(tc.scale(q["a"], k), np.random.default_rng(4))


def case_gelu(rng):
    r, c = _dims(rng, 2)
    # |x| <= 3 keeps every derivative well above central-difference roundoff
    p = ParamStore({"a": rng.uniform(-3.0, 3.0, size=(r, c))})
    return p, lambda q: _weighted(tc.gelu(q["a"]), np.random.default_rng(5))


def case_matmul(rng):
    r, k, c = _dims(rng, 3)
    p = ParamStore({"a": rng.normal(size=(r, k)), "b": rng.normal(size=(k, c))})
    return p, lambda q: _weighted(tc.matmul(q["a"], q["b"]), np.random.default_rng(6))


def case_batched_matmul(rng):
    b, r, k, c = _dims(rng, 4)
    p = ParamStore({"a": rng.normal(size=(b, r, k)), "b": rng.normal(size=(k, c))})
    return p, lambda q: _weighted(tc.matmul(q["a"], q["b"]), np.random.default_rng(7))


def case_transpose(rng):
    a, b, c = _dims(rng, 3)
    p = ParamStore({"a": rng.normal(size=(a, b, c))})
    return p, lambda q: _weighted(tc.transpose(q["a"], (1, 2, 0)), np.random.default_rng(8))


def case_reshape(rng):
    a, b = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(a, b))})
    return p, lambda q: _weighted(tc.reshape(q["a"], (a * b, 1)), np.random.default_rng(9))


def case_concat(rng):
    r, c1, c2 = _dims(rng, 3)
    p = ParamStore({"a": rng.normal(size=(r, c1)), "b": rng.normal(size=(r, c2))})
    return p, lambda q: _weighted(tc.concat([q["a"], q["b"]], axis=-1), np.random.default_rng(10))


def case_softmax(rng):
    r, c = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(r, c))})
    return p, lambda q: _weighted(tc.softmax_rows(q["a"]), np.random.default_rng(11))


def case_layer_norm(rng):
    r = _dims(rng, 1)[0]
    # width 2 pins normalized values at +-1, leaving input gradients at roundoff scale
    c = _dims(rng, 1, lo=3)[0]
    p = ParamStore(
        {"x": rng.normal(size=(r, c)), "g": rng.normal(size=c), "b": rng.normal(size=c)}
    )
    return p, lambda q: _weighted(tc.layer_norm(q["x"], q["g"], q["b"], 1e-5), np.random.default_rng(12))


def case_mean_pool(rng):
    t, d = _dims(rng, 2)
    f = int(rng.choice([1, 2, 4]))
    p = ParamStore({"a": rng.normal(size=(t, d))})
    return p, lambda q: _weighted(tc.mean_pool_time(q["a"], f), np.random.default_rng(13))


def case_repeat_upsample(rng):
    s, d = _dims(rng, 2)
    f = int(rng.choice([1, 2, 4]))
    target = int(rng.integers(max(1, s * f - f + 1), s * f + 1))
    p = ParamStore({"a": rng.normal(size=(s, d))})
    return p, lambda q: _weighted(tc.repeat_upsample(q["a"], f, target), np.random.default_rng(14))


def case_mse(rng):
    r, c = _dims(rng, 2)
    y = tc.Tensor(rng.normal(size=(r, c)))
    p = ParamStore({"a": rng.normal(size=(r, c))})
    return p, lambda q: tc.mse(q["a"], y)


def case_mean_sum(rng):
    r, c = _dims(rng, 2)
    p = ParamStore({"a": rng.normal(size=(r, c))})
    return p, lambda q: tc.add(tc.mean_all(tc.mul(q["a"], q["a"])), tc.sum_all(q["a"]))


OP_CASES = {
    "add": case_add,
    "sub": case_sub,
    "mul": case_mul,
    "scale": case_scale,
    "gelu": case_gelu,
    "matmul": case_matmul,
    "batched_matmul": case_batched_matmul,
    "transpose": case_transpose,
    "reshape": case_reshape,
    "concat": case_concat,
    "softmax_rows": case_softmax,
    "layer_norm": case_layer_norm,
    "mean_pool_time": case_mean_pool,
    "repeat_upsample": case_repeat_upsample,
    "mse": case_mse,
    "mean_sum": case_mean_sum,
}


def worst_op_error(name: str, trials: int = 100, eps: float = 1e-5) -> float:
    worst = 0.0
    for seed in range(trials):
        params, f = OP_CASES[name](np.random.default_rng(seed))
        worst = max(worst, grad_check(f, params, eps))
    return worst
