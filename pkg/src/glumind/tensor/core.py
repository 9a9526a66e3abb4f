"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active (``with tape: ...``) and
that touch at least one tensor with ``requires_grad=True`` are appended to
the tape.  :func:`backward` walks the tape once in reverse order.
"""

from __future__ import annotations

import contextvars
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from glumind.errors import ConfigurationError, ContractError, LengthError, ShapeError

SUPPORTED_POOL_FACTORS = (1, 2, 4)

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "glumind_active_tape", default=None
)


class Tensor:
    """A float64 array, optionally tracked for differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return swap_last(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(eq=False)
class Node:
    id: int
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    tape: "Tape"


@dataclass(eq=False)
class Tape:
    """Append-only record of differentiable operations."""

    nodes: list[Node] = field(default_factory=list)
    _tokens: list = field(default_factory=list, repr=False)

    def record(self, kind, inputs, output, backward) -> Node:
        node = Node(len(self.nodes), kind, tuple(inputs), output, backward, self)
        self.nodes.append(node)
        return node

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.nodes)


class no_grad:
    """Context manager that suspends recording on any active tape."""

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(None)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward, kind: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{kind} produced non-finite values")
    out = Tensor._wrap(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = tape.record(kind, inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def _sigmoid_pair(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sigmoid(z), sigmoid(-z)) from one exp(-|z|), accurate when saturated."""
    e = np.exp(-np.abs(z))
    inv = 1.0 / (1.0 + e)
    big = e * inv
    pos = z >= 0
    return np.where(pos, inv, big), np.where(pos, big, inv)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU (smooth, so finite differences stay valid everywhere)."""
    # 0.5 * (1 + tanh(z)) == sigmoid(2z); the sigmoid form keeps precision when saturated
    xd = x.data
    k = math.sqrt(2.0 / math.pi)
    x2 = xd * xd
    s, s_neg = _sigmoid_pair(2.0 * k * xd * (1.0 + 0.044715 * x2))
    out = xd * s

    def back(g):
        dz2 = 2.0 * k * (1.0 + 3 * 0.044715 * x2)
        return (g * (s + xd * s * s_neg * dz2),)

    return _make(out, (x,), back, "gelu")


# ---------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, max(x.size, 1)
    return _make(
        np.array(x.data.sum() / n),
        (x,),
        lambda g: (np.broadcast_to(g / n, shape).copy(),),
        "mean",
    )


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over every element."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    d = sub(pred, target)
    return mean_all(mul(d, d))


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), back, "matmul")


def swap_last(x: Tensor) -> Tensor:
    return _make(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "swap_last")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(tuple(shape)), (x,), lambda g: (g.reshape(src),), "reshape")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    if len(xs) == 1:
        return xs[0]
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in xs], axis=axis),
        xs,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
        "concat",
    )


# ---------------------------------------------------------------- attention pieces


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis with per-row max subtraction."""
    if x.shape[-1] < 1:
        raise ShapeError(f"softmax needs at least one column, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), back, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ConfigurationError("layer_norm eps must be positive")
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm params {gain.shape}/{bias.shape} do not match width {c}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gain.data

    def back(g):
        gx_hat = g * gd
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gd + bias.data, (x, gain, bias), back, "layer_norm")


def _anchored_mean(groups: np.ndarray) -> np.ndarray:
    # mean over axis -2 offset by the group's first row: exact on constant groups
    first = groups[..., :1, :]
    return first[..., 0, :] + (groups - first).mean(axis=-2)


def mean_pool_time(x: Tensor, factor: int) -> Tensor:
    """Average consecutive groups of ``factor`` rows along the time axis (-2).

    A trailing partial group is averaged over its actual size.
    """
    if factor not in SUPPORTED_POOL_FACTORS:
        raise ConfigurationError(f"pool factor {factor} not in {SUPPORTED_POOL_FACTORS}")
    t = x.shape[-2]
    if t < 1:
        raise LengthError("mean_pool_time needs at least one time step")
    if factor == 1:
        return x
    xd = x.data
    lead, d = xd.shape[:-2], xd.shape[-1]
    n_full, rem = divmod(t, factor)
    parts = []
    if n_full:
        parts.append(_anchored_mean(xd[..., : n_full * factor, :].reshape(*lead, n_full, factor, d)))
    if rem:
        parts.append(_anchored_mean(xd[..., n_full * factor :, :][..., None, :, :]))
    out = np.concatenate(parts, axis=-2) if len(parts) > 1 else parts[0]

    def back(g):
        gx = np.empty_like(xd)
        if n_full:
            gf = g[..., :n_full, :] / factor
            gx[..., : n_full * factor, :] = np.repeat(gf, factor, axis=-2)
        if rem:
            gx[..., n_full * factor :, :] = g[..., n_full:, :] / rem
        return (gx,)

    return _make(out, (x,), back, "mean_pool_time")


def repeat_upsample(x: Tensor, factor: int, target_len: int) -> Tensor:
    """Repeat each time row ``factor`` times, then truncate to ``target_len``."""
    s = x.shape[-2]
    if factor < 1 or s * factor < target_len:
        raise LengthError(f"cannot upsample {s} rows by {factor} to length {target_len}")
    if factor == 1 and target_len == s:
        return x
    xd = x.data
    out = np.repeat(xd, factor, axis=-2)[..., :target_len, :]

    def back(g):
        full = np.zeros(xd.shape[:-2] + (s * factor, xd.shape[-1]))
        full[..., :target_len, :] = g
        return (full.reshape(*xd.shape[:-2], s, factor, xd.shape[-1]).sum(axis=-2),)

    return _make(out, (x,), back, "repeat_upsample")


# ---------------------------------------------------------------- backward pass


def backward(loss: Tensor, tape: Tape, params=None) -> dict[str, np.ndarray]:
    """Reverse-mode sweep from a scalar ``loss`` recorded on ``tape``.

    Leaf tensors reached from the loss get their ``.grad`` overwritten.  When
    ``params`` (a ParamStore) is given, every entry receives a gradient (zero
    when unreachable) and a name -> gradient mapping is returned.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is not None and loss.node.tape is not tape:
        raise ContractError("loss was recorded on a different tape")

    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.node is None:
        if loss.requires_grad:
            leaves[id(loss)] = loss
            grads[id(loss)] = np.ones_like(loss.data)
    else:
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(tape.nodes[: loss.node.id + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if inp.node is None:
                    leaves[key] = inp
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi

    for key, leaf in leaves.items():
        leaf.grad = np.array(grads[key], dtype=np.float64).reshape(leaf.shape)

    if params is None:
        return {}
    out = {}
    for name, p in params.items():
        if id(p) not in leaves:
            p.grad = np.zeros_like(p.data)
        out[name] = p.grad
    return out
