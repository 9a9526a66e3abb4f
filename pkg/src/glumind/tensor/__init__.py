from glumind.tensor.core import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    gelu,
    layer_norm,
    matmul,
    mean_all,
    mean_pool_time,
    mse,
    mul,
    no_grad,
    repeat_upsample,
    reshape,
    scale,
    softmax_rows,
    sub,
    sum_all,
    swap_last,
    transpose,
)
from glumind.tensor.gradcheck import grad_check
from glumind.tensor.optim import AdamW, adamw_step
from glumind.tensor.params import ParamStore, load, save

__all__ = [
    "AdamW",
    "ParamStore",
    "Tape",
    "Tensor",
    "adamw_step",
    "add",
    "backward",
    "concat",
    "gelu",
    "grad_check",
    "layer_norm",
    "load",
    "matmul",
    "mean_all",
    "mean_pool_time",
    "mse",
    "mul",
    "no_grad",
    "repeat_upsample",
    "reshape",
    "save",
    "scale",
    "softmax_rows",
    "sub",
    "sum_all",
    "swap_last",
    "transpose",
]
