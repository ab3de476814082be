"""
Minimal dense-tensor kernel: float64 tensors, reverse-mode gradients, Adam.
"""
from .functional import MASK_VALUE, conv2d, layer_norm, linear, log_softmax, masked_fill, softmax
from .module import LayerNorm, Linear, Mlp, Module
from .optim import Adam, AdamState, adam_step
from .rng import make_rng
from .tensor import Tensor, as_tensor, concat, matmul, minimum, no_grad, parameter, where

__all__ = [
    "Tensor",
    "as_tensor",
    "parameter",
    "no_grad",
    "matmul",
    "concat",
    "where",
    "minimum",
    "softmax",
    "log_softmax",
    "layer_norm",
    "linear",
    "conv2d",
    "masked_fill",
    "MASK_VALUE",
    "Module",
    "Linear",
    "LayerNorm",
    "Mlp",
    "Adam",
    "AdamState",
    "adam_step",
    "make_rng",
]
