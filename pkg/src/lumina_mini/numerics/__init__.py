from .tensor import (
    ComputeGraph,
    Tensor,
    apply_rotary,
    avg_pool2d,
    concat,
    embedding,
    full,
    matmul,
    no_grad,
    ones,
    randn,
    rms_norm,
    set_matmul_threads,
    sinusoid,
    softmax_lastdim,
    split,
    strict_mode,
    zero_grads,
    zeros,
)
from .serialize import load_tensor, read_tensor, save_tensor, write_tensor

__all__ = [
    "ComputeGraph",
    "Tensor",
    "apply_rotary",
    "avg_pool2d",
    "concat",
    "embedding",
    "full",
    "matmul",
    "no_grad",
    "ones",
    "randn",
    "rms_norm",
    "set_matmul_threads",
    "sinusoid",
    "softmax_lastdim",
    "split",
    "strict_mode",
    "zero_grads",
    "zeros",
    "load_tensor",
    "read_tensor",
    "save_tensor",
    "write_tensor",
]
