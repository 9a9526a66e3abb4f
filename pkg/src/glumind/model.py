"""Multimodal glucose forecaster built on cross-attention and multi-scale attention.

Layout of one forward pass on a batch of B windows::

    X_G   = embed(glucose history)                       (B, T, d)
    X_i   = embed(aux_i at native rate)                  (B, t_i, d)
    X_CA  = AddNorm(FF(sum_i MHA(X_G, X_i, X_i)))        cross branch
    X_I   = fuse([X_G, embed(aux_i on 5-min grid), ...]) (B, T, d)
    X_MS  = AddNorm(FF(sum_s up_s(MHA(pool_s(X_I)))))    scales 1, 2, 4
    y     = head(flatten(AddNorm(FF(X_CA + X_MS))))      (B, m)

Parameter names are grouped by namespace (``emb``, ``ca``, ``fuse``, ``ms``,
``mha``, ``final``, ``head``) so a whole branch can be zeroed or inspected.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from glumind.errors import CapacityError, CompatibilityError, ConfigurationError, ShapeError
from glumind.signals.types import Modality, aux_modalities, feature_label
from glumind.signals.windows import Batch
from glumind.tensor import (
    ParamStore,
    Tensor,
    add,
    concat,
    gelu,
    layer_norm,
    matmul,
    mean_pool_time,
    mul,
    no_grad,
    repeat_upsample,
    reshape,
    scale,
    softmax_rows,
    swap_last,
    transpose,
)
from glumind.tensor import params as checkpoint

log = logging.getLogger(__name__)

CANONICAL_HORIZONS = (1, 6, 12)
SCALES = (1, 2, 4)


class Variant(str, enum.Enum):
    Full = "Full"
    CrossOnly = "CrossOnly"
    MultiScaleOnly = "MultiScaleOnly"
    PlainMHA = "PlainMHA"


@dataclass
class ModelConfig:
    d_model: int = 64
    heads: int = 4
    T: int = 80
    m: int = 12
    features: tuple[str, ...] = ("BG",)
    ff_hidden: int = 128
    variant: Variant = Variant.Full
    seed: int = 0
    scales: tuple[int, ...] = SCALES
    n_layers: int = 1
    max_len: int = 2048
    ln_eps: float = 1e-5

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.features = tuple(self.features)
        self.scales = tuple(self.scales)
        if self.d_model < 1 or self.heads < 1 or self.d_model % self.heads:
            raise ConfigurationError(f"d_model={self.d_model} must be a positive multiple of heads={self.heads}")
        if self.T < 1 or self.m < 1 or self.ff_hidden < 1 or self.n_layers < 1:
            raise ConfigurationError("T, m, ff_hidden and n_layers must be >= 1")
        if self.uses_multi_scale and self.scales != SCALES:
            raise ConfigurationError(f"scales must be exactly {list(SCALES)}, got {list(self.scales)}")
        if self.uses_multi_scale and self.T < 4:
            raise ConfigurationError(f"multi-scale attention needs T >= 4, got {self.T}")
        if self.T > self.max_len:
            raise CapacityError(f"T={self.T} exceeds positional capacity {self.max_len}")
        mods = aux_modalities(self.features)  # validates feature tokens
        if self.variant is Variant.CrossOnly and not mods:
            raise ConfigurationError("variant CrossOnly needs at least one auxiliary signal")
        if self.m not in CANONICAL_HORIZONS:
            log.info("horizon m=%d is outside the canonical grid %s", self.m, CANONICAL_HORIZONS)

    @property
    def aux(self) -> list[Modality]:
        return aux_modalities(self.features)

    @property
    def n_aux(self) -> int:
        return len(self.aux)

    @property
    def canonical_horizon(self) -> bool:
        return self.m in CANONICAL_HORIZONS

    @property
    def uses_cross(self) -> bool:
        return self.variant in (Variant.Full, Variant.CrossOnly) and self.n_aux > 0

    @property
    def uses_multi_scale(self) -> bool:
        return self.variant in (Variant.Full, Variant.MultiScaleOnly)

    @property
    def effective_variant(self) -> Variant:
        """Full without auxiliary signals has no cross branches to run."""
        if self.variant is Variant.Full and self.n_aux == 0:
            return Variant.MultiScaleOnly
        return self.variant

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["features"] = list(self.features)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def _ff_count(d: int, h: int) -> int:
    return d * h + h + h * d + d


def param_count(cfg: ModelConfig) -> int:
    """Closed-form number of scalar parameters for ``cfg``."""
    d, h, L = cfg.d_model, cfg.ff_hidden, cfg.n_layers
    block_tail = _ff_count(d, h) + 2 * d  # FF plus LayerNorm gain and bias
    total = (cfg.n_aux + 1) * 2 * d  # embeddings
    if cfg.uses_cross:
        total += L * (cfg.n_aux * 4 * d * d + block_tail)
    if cfg.variant is not Variant.CrossOnly:
        total += (cfg.n_aux + 1) * d * d + d  # fuse projection
    if cfg.uses_multi_scale:
        total += L * (len(SCALES) * 4 * d * d + block_tail)
    if cfg.variant is Variant.PlainMHA:
        total += L * (4 * d * d + block_tail)
    total += block_tail  # final FF and AddNorm
    total += cfg.T * d * cfg.m + cfg.m  # head
    return total


def positional_table(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    freq = np.exp(-math.log(10000.0) * (2 * (np.arange(d) // 2)) / d)
    angle = pos * freq[None, :]
    table = np.where(np.arange(d) % 2 == 0, np.sin(angle), np.cos(angle))
    return table


# ---------------------------------------------------------------- attention primitives


def _const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def attention_weights(Q: Tensor, K: Tensor, d_model: int) -> Tensor:
    """Row-stochastic weights softmax(Q K^T / sqrt(d_model))."""
    Q, K = _const(Q), _const(K)
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeError(f"query width {Q.shape[-1]} != key width {K.shape[-1]}")
    return softmax_rows(scale(matmul(Q, swap_last(K)), 1.0 / math.sqrt(d_model)))


def scaled_attention(Q, K, V, d_model: int | None = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_model)) V.  ``d_model`` defaults to Q's width."""
    Q, K, V = _const(Q), _const(K), _const(V)
    if K.shape[-2] != V.shape[-2]:
        raise ShapeError(f"{K.shape[-2]} keys but {V.shape[-2]} values")
    w = attention_weights(Q, K, d_model or Q.shape[-1])
    return matmul(w, V)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, t, d = x.shape
    x = reshape(x, (*lead, t, heads, d // heads))
    n = len(lead)
    return transpose(x, (*range(n), n + 1, n, n + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, t, dh = x.shape
    n = len(lead)
    x = transpose(x, (*range(n), n + 1, n, n + 2))
    return reshape(x, (*lead, t, h * dh))


def multi_head(X_q: Tensor, X_kv: Tensor, weights: Mapping[str, Tensor], heads: int) -> Tensor:
    """Partitioned multi-head attention; weights ``wq, wk, wv, wh`` are d x d."""
    d = X_q.shape[-1]
    for key in ("wq", "wk", "wv", "wh"):
        if weights[key].shape != (d, d):
            raise ShapeError(f"{key} has shape {weights[key].shape}, expected {(d, d)}")
    if d % heads:
        raise ShapeError(f"width {d} not divisible by {heads} heads")
    q = _split_heads(matmul(X_q, weights["wq"]), heads)
    k = _split_heads(matmul(X_kv, weights["wk"]), heads)
    v = _split_heads(matmul(X_kv, weights["wv"]), heads)
    return matmul(_merge_heads(scaled_attention(q, k, v, d)), weights["wh"])


def feed_forward(x: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    return add(matmul(gelu(add(matmul(x, p["w1"]), p["b1"])), p["w2"]), p["b2"])


def add_norm(x: Tensor, p: Mapping[str, Tensor], eps: float = 1e-5) -> Tensor:
    """Post-norm residual block: LayerNorm(x + FF(x))."""
    return layer_norm(add(x, feed_forward(x, p)), p["gain"], p["bias"], eps)


# ---------------------------------------------------------------- model


class _Scope(Mapping):
    """View of a ParamStore under a dotted prefix."""

    def __init__(self, store: ParamStore, prefix: str):
        self.store, self.prefix = store, prefix

    def __getitem__(self, key):
        return self.store[f"{self.prefix}.{key}"]

    def __iter__(self):
        n = len(self.prefix) + 1
        return (k[n:] for k in self.store if k.startswith(self.prefix + "."))

    def __len__(self):
        return sum(1 for _ in self)

    def sub(self, name: str) -> "_Scope":
        return _Scope(self.store, f"{self.prefix}.{name}")


def _block_params(prefix: str, d: int, h: int) -> dict[str, tuple[tuple[int, ...], int]]:
    """name -> (shape, fan_in) for a FF + LayerNorm block."""
    return {
        f"{prefix}.w1": ((d, h), d),
        f"{prefix}.b1": ((h,), d),
        f"{prefix}.w2": ((h, d), h),
        f"{prefix}.b2": ((d,), h),
        f"{prefix}.gain": ((d,), 0),
        f"{prefix}.bias": ((d,), 0),
    }


def _attn_params(prefix: str, d: int) -> dict[str, tuple[tuple[int, ...], int]]:
    return {f"{prefix}.{w}": ((d, d), d) for w in ("wq", "wk", "wv", "wh")}


def param_layout(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], int]]:
    """Every parameter as name -> (shape, fan_in); fan_in 0 marks LayerNorm."""
    d, h = cfg.d_model, cfg.ff_hidden
    layout = {}
    for mod in [Modality.Glucose, *cfg.aux]:
        layout[f"emb.{mod.value}.weight"] = ((d,), 1)
        layout[f"emb.{mod.value}.bias"] = ((d,), 1)
    for layer in range(cfg.n_layers):
        if cfg.uses_cross:
            for mod in cfg.aux:
                layout.update(_attn_params(f"ca.l{layer}.{mod.value}", d))
            layout.update(_block_params(f"ca.l{layer}.ff", d, h))
        if cfg.uses_multi_scale:
            for s in SCALES:
                layout.update(_attn_params(f"ms.l{layer}.scale{s}", d))
            layout.update(_block_params(f"ms.l{layer}.ff", d, h))
        if cfg.variant is Variant.PlainMHA:
            layout.update(_attn_params(f"mha.l{layer}.attn", d))
            layout.update(_block_params(f"mha.l{layer}.ff", d, h))
    if cfg.variant is not Variant.CrossOnly:
        fan = (cfg.n_aux + 1) * d
        layout["fuse.weight"] = ((fan, d), fan)
        layout["fuse.bias"] = ((d,), fan)
    layout.update(_block_params("final.ff", d, h))
    layout["head.weight"] = ((cfg.T * d, cfg.m), cfg.T * d)
    layout["head.bias"] = ((cfg.m,), cfg.T * d)
    return layout


def init_params(cfg: ModelConfig) -> ParamStore:
    """Uniform(+-1/sqrt(fan_in)) weights; LayerNorm gains 1 and biases 0.

    Each tensor draws from its own stream keyed by (seed, name), so a
    parameter's initial value does not depend on which others exist.
    """
    store = ParamStore()
    for name, (shape, fan_in) in param_layout(cfg).items():
        if fan_in == 0:
            value = np.ones(shape) if name.endswith(".gain") else np.zeros(shape)
        else:
            rng = np.random.default_rng([cfg.seed, zlib.crc32(name.encode())])
            bound = 1.0 / math.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        store.add(name, value)
    return store


class GluMindModel:
    def __init__(self, config: ModelConfig, params: ParamStore | None = None, frozen: bool = False):
        self.config = config
        self.params = params if params is not None else init_params(config)
        self.frozen = frozen
        self.pos_table = positional_table(config.max_len, config.d_model)
        expected = param_layout(config)
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise CompatibilityError(f"parameter names differ: missing {missing[:3]}, unexpected {extra[:3]}", "params")
        for name, (shape, _) in expected.items():
            if self.params[name].shape != shape:
                raise CompatibilityError(f"{name} has shape {self.params[name].shape}, expected {shape}", name)

    # -- introspection

    @property
    def n_cross_branches(self) -> int:
        return self.config.n_aux if self.config.uses_cross else 0

    def num_parameters(self) -> int:
        return self.params.num_values()

    def snapshot(self) -> "GluMindModel":
        """Frozen inference-only copy."""
        return GluMindModel(self.config, self.params.copy(), frozen=True)

    # -- building blocks

    def embed_and_encode(self, x, modality: Modality) -> Tensor:
        """Affine lift of each scalar to d_model plus the sinusoidal table rows 0..t-1."""
        x = np.asarray(x, dtype=np.float64)
        t = x.shape[-1]
        if t < 1:
            raise ShapeError("cannot embed an empty window")
        if t > self.config.max_len:
            raise CapacityError(f"{modality.value} window of {t} exceeds positional capacity {self.config.max_len}")
        name = Modality(modality).value
        w, b = self.params[f"emb.{name}.weight"], self.params[f"emb.{name}.bias"]
        lifted = add(mul(Tensor(x[..., None]), w), b)
        return add(lifted, Tensor(self.pos_table[:t]))

    def cross_attention_branch(self, X_G: Tensor, aux: Sequence[Tensor], layer: int = 0, branch_sum_only: bool = False) -> Tensor:
        cfg = self.config
        if not aux:
            raise ConfigurationError("cross-attention needs at least one auxiliary signal")
        if len(aux) != cfg.n_aux:
            raise ConfigurationError(f"expected {cfg.n_aux} auxiliary inputs, got {len(aux)}")
        scope = _Scope(self.params, f"ca.l{layer}")
        total = None
        for mod, X_i in zip(cfg.aux, aux):
            out = multi_head(X_G, X_i, scope.sub(mod.value), cfg.heads)
            total = out if total is None else add(total, out)
        if branch_sum_only:
            return total
        return add_norm(total, scope.sub("ff"), cfg.ln_eps)

    def fuse_inputs(self, X_G: Tensor, aligned: Sequence[Tensor]) -> Tensor:
        """Feature-axis concat of grid-aligned embeddings, projected back to d_model."""
        for X in aligned:
            if X.shape[-2] != X_G.shape[-2]:
                raise ShapeError(f"aligned input has {X.shape[-2]} steps, glucose has {X_G.shape[-2]}")
        stacked = concat([X_G, *aligned], axis=-1)
        return add(matmul(stacked, self.params["fuse.weight"]), self.params["fuse.bias"])

    def multi_scale_branch(self, X_I: Tensor, layer: int = 0, branch_sum_only: bool = False) -> Tensor:
        cfg = self.config
        T = X_I.shape[-2]
        if T < 4:
            raise ConfigurationError(f"multi-scale attention needs at least 4 steps, got {T}")
        scope = _Scope(self.params, f"ms.l{layer}")
        total = None
        for s in SCALES:
            pooled = mean_pool_time(X_I, s)
            out = multi_head(pooled, pooled, scope.sub(f"scale{s}"), cfg.heads)
            if s > 1:
                out = repeat_upsample(out, s, T)
            total = out if total is None else add(total, out)
        if branch_sum_only:
            return total
        return add_norm(total, scope.sub("ff"), cfg.ln_eps)

    def plain_attention_block(self, X_I: Tensor, layer: int = 0) -> Tensor:
        scope = _Scope(self.params, f"mha.l{layer}")
        return add_norm(multi_head(X_I, X_I, scope.sub("attn"), self.config.heads), scope.sub("ff"), self.config.ln_eps)

    # -- forward

    def _check_inputs(self, aux: Mapping, aux_aligned: Mapping) -> None:
        for mod in self.config.aux:
            if mod not in aux:
                raise ConfigurationError(f"input lacks modality {mod.value} required by features {feature_label(self.config.features)}")
            if self.config.variant is not Variant.CrossOnly and mod not in aux_aligned:
                raise ConfigurationError(f"input lacks grid-aligned {mod.value} needed for fusion")

    def forward_arrays(self, history: np.ndarray, aux: Mapping, aux_aligned: Mapping) -> Tensor:
        """history (B, T) plus per-modality arrays -> predictions (B, m)."""
        cfg = self.config
        history = np.asarray(history, dtype=np.float64)
        if history.shape[-1] != cfg.T:
            raise ShapeError(f"history length {history.shape[-1]} != T={cfg.T}")
        self._check_inputs(aux, aux_aligned)
        X_G = self.embed_and_encode(history, Modality.Glucose)
        variant = cfg.effective_variant

        parts = []
        if variant in (Variant.Full, Variant.CrossOnly):
            natives = [self.embed_and_encode(aux[mod], mod) for mod in cfg.aux]
            X_CA = X_G
            for layer in range(cfg.n_layers):
                X_CA = self.cross_attention_branch(X_CA, natives, layer)
            parts.append(X_CA)
        if variant is not Variant.CrossOnly:
            aligned = [self.embed_and_encode(aux_aligned[mod], mod) for mod in cfg.aux]
            X = self.fuse_inputs(X_G, aligned)
            for layer in range(cfg.n_layers):
                if variant is Variant.PlainMHA:
                    X = self.plain_attention_block(X, layer)
                else:
                    X = self.multi_scale_branch(X, layer)
            parts.append(X)
        z = parts[0] if len(parts) == 1 else add(parts[0], parts[1])
        z = add_norm(z, _Scope(self.params, "final.ff"), cfg.ln_eps)
        flat = reshape(z, (*z.shape[:-2], cfg.T * cfg.d_model))
        return add(matmul(flat, self.params["head.weight"]), self.params["head.bias"])

    def forward_batch(self, batch: Batch) -> Tensor:
        if self.frozen:
            with no_grad():
                return self.forward_arrays(batch.history, batch.aux, batch.aux_aligned)
        return self.forward_arrays(batch.history, batch.aux, batch.aux_aligned)

    def forward(self, sample) -> np.ndarray:
        """Single WindowSample -> length-m prediction (normalized units)."""
        with no_grad():
            out = self.forward_arrays(
                sample.target_history[None, :],
                {k: v[None, :] for k, v in sample.aux_windows.items()},
                {k: v[None, :] for k, v in sample.aux_aligned.items()},
            )
        return out.data[0]

    def predict(self, batch: Batch) -> np.ndarray:
        with no_grad():
            return self.forward_arrays(batch.history, batch.aux, batch.aux_aligned).data


# ---------------------------------------------------------------- persistence


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_model(model: GluMindModel, path: str | Path, extra: Mapping | None = None) -> None:
    """Checkpoint plus a JSON sidecar holding the config and feature set."""
    path = Path(path)
    checkpoint.save(model.params, path)
    doc = {"config": model.config.to_dict(), "features": list(model.config.features)}
    if extra:
        doc.update(extra)
    sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> tuple[GluMindModel, dict]:
    path = Path(path)
    doc = json.loads(sidecar_path(path).read_text())
    cfg = ModelConfig.from_dict(doc["config"])
    return GluMindModel(cfg, checkpoint.load(path)), doc


def check_compatible(a: ModelConfig, b: ModelConfig) -> None:
    """Raise CompatibilityError naming the first differing field."""
    for name in a.__dataclass_fields__:
        if name == "seed":
            continue
        if getattr(a, name) != getattr(b, name):
            raise CompatibilityError(f"config field {name!r} differs: {getattr(a, name)!r} vs {getattr(b, name)!r}", name)
