"""
Fused differentiable functions built on Tensor

softmax, log_softmax and layer_norm carry hand-derived backward passes
instead of composing primitive ops, which keeps graphs short and the
normalizations numerically tight.
"""
from functools import lru_cache
from typing import Tuple

import numpy as np

from xlpolicy.errors import ShapeError
from xlpolicy.numerics.tensor import Tensor, _result, _unbroadcast, as_tensor, matmul

__all__ = [
    "matmul",
    "softmax",
    "log_softmax",
    "layer_norm",
    "linear",
    "conv2d",
    "conv_output_size",
    "masked_fill",
]

# Finite stand-in for -inf on masked attention logits
MASK_VALUE = -1e30


def softmax(x, axis: int = -1) -> Tensor:
    """
    Numerically stable softmax (max-subtraction).

    Raises:
        ShapeError: the reduction axis is empty
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"softmax over an empty axis: shape {x.shape}, axis {axis}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result(s, (x,), "softmax", backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"log_softmax over an empty axis: shape {x.shape}, axis {axis}")
    m = x.data.max(axis=axis, keepdims=True)
    y = x.data - (m + np.log(np.exp(x.data - m).sum(axis=axis, keepdims=True)))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _result(y, (x,), "log_softmax", backward)


def layer_norm(x, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize the last axis to zero mean / unit variance, then apply
    ``gain`` and ``bias``.

    Raises:
        ShapeError: last axis shorter than 2 or affine widths disagree
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d < 2:
        raise ShapeError(f"layer_norm needs at least 2 features, got shape {x.shape}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match width {d}")
    if eps <= 0:
        raise ShapeError(f"layer_norm eps must be positive, got {eps}")

    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    out = x_hat * gain.data + bias.data

    def backward(g):
        g_hat = g * gain.data
        gx = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        rows_g = g.reshape(-1, d)
        return (
            gx if x.requires_grad else None,
            (rows_g * x_hat.reshape(-1, d)).sum(axis=0) if gain.requires_grad else None,
            rows_g.sum(axis=0) if bias.requires_grad else None,
        )

    return _result(out, (x, gain, bias), "layer_norm", backward)


def linear(x, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias``; a 1-D ``x`` is treated as a single row"""
    x = as_tensor(x)
    if x.ndim == 1:
        return linear(x.reshape(1, -1), weight, bias).reshape(-1)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear input width {x.shape[-1]} does not match weight {weight.shape}")
    return matmul(x, weight) + bias


def masked_fill(x, allowed: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``allowed`` is False by a constant"""
    x = as_tensor(x)
    allowed = np.asarray(allowed, dtype=bool)

    def backward(g):
        return (_unbroadcast(np.where(allowed, g, 0.0), x.shape),)

    return _result(np.where(allowed, x.data, value), (x,), "masked_fill", backward)


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


@lru_cache(maxsize=64)
def _patch_index(shape: Tuple[int, int, int, int], kernel: int, stride: int) -> np.ndarray:
    n, h, w, c = shape
    oh, ow = conv_output_size(h, kernel, stride), conv_output_size(w, kernel, stride)
    bi = np.arange(n).reshape(n, 1, 1, 1, 1, 1)
    ri = np.arange(oh).reshape(1, oh, 1, 1, 1, 1) * stride + np.arange(kernel).reshape(1, 1, 1, kernel, 1, 1)
    ci = np.arange(ow).reshape(1, 1, ow, 1, 1, 1) * stride + np.arange(kernel).reshape(1, 1, 1, 1, kernel, 1)
    ch = np.arange(c).reshape(1, 1, 1, 1, 1, c)
    index = ((bi * h + ri) * w + ci) * c + ch
    index = index.reshape(n * oh * ow, kernel * kernel * c)
    index.setflags(write=False)
    return index


def conv2d(x, weight: Tensor, bias: Tensor, kernel: int, stride: int) -> Tensor:
    """
    Valid (unpadded) 2-D convolution over channel-last input.

    Args:
        x: (N, H, W, C)
        weight: (kernel * kernel * C, C_out), patch layout (row, col, channel)
        bias: (C_out,)

    Returns:
        (N, OH, OW, C_out)
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects (N, H, W, C) input, got {x.shape}")
    n, h, w, c = x.shape
    if weight.shape[0] != kernel * kernel * c:
        raise ShapeError(f"conv2d weight {weight.shape} does not fit kernel {kernel} over {c} channels")
    oh, ow = conv_output_size(h, kernel, stride), conv_output_size(w, kernel, stride)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d kernel {kernel} does not fit input {x.shape}")
    patches = x.take(_patch_index(x.shape, kernel, stride))
    return (matmul(patches, weight) + bias).reshape(n, oh, ow, weight.shape[1])
