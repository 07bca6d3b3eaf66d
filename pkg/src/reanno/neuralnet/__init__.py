from .autodiff import (
    GradCheckEntry,
    GraphError,
    Tensor,
    add,
    concat,
    dropout,
    grad_check,
    l2_normalize,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean_,
    mul,
    relu,
    reshape,
    slice_,
    softmax,
    sum_,
    transpose,
)
from .checkpoint import load_params, save_params
from .layers import (
    attention_encoder_block,
    encoder_stack,
    init_encoder_params,
    init_linear,
    multi_head_attention,
    sincos_positions,
    softmax_xent,
)
from .optim import AdamW, warmup_constant_lr, zero_grads

__all__ = [
    "AdamW",
    "GradCheckEntry",
    "GraphError",
    "Tensor",
    "add",
    "attention_encoder_block",
    "concat",
    "dropout",
    "encoder_stack",
    "grad_check",
    "init_encoder_params",
    "init_linear",
    "l2_normalize",
    "layer_norm",
    "load_params",
    "log",
    "log_softmax",
    "matmul",
    "mean_",
    "mul",
    "multi_head_attention",
    "relu",
    "reshape",
    "save_params",
    "sincos_positions",
    "slice_",
    "softmax",
    "softmax_xent",
    "sum_",
    "transpose",
    "warmup_constant_lr",
    "zero_grads",
]
