"""
Parameter containers

A Module exposes its trainable tensors by walking its attributes in
definition order, so parameter names are stable across runs and match the
checkpoint layout.
"""
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from xlpolicy.errors import ShapeError
from xlpolicy.numerics.functional import layer_norm, linear
from xlpolicy.numerics.tensor import Tensor, parameter


class Module:
    """Base class for anything that owns parameters"""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield f"{prefix}{name}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter keyed by its dotted name"""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """
        Overwrite parameters in place (optimizer references stay valid).

        Raises:
            ShapeError: names or shapes do not match this module exactly
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"parameter {name}: expected shape {p.shape}, got {value.shape}")
            p.data[...] = value


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape if shape is not None else (fan_in, fan_out))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = parameter(glorot(rng, in_features, out_features))
        self.bias = parameter(np.zeros(out_features))

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Mlp(Module):
    """linear -> tanh -> linear"""

    def __init__(self, in_features: int, hidden: int, out_features: int, rng: np.random.Generator):
        self.hidden = Linear(in_features, hidden, rng)
        self.out = Linear(hidden, out_features, rng)

    @property
    def in_features(self) -> int:
        return self.hidden.in_features

    def __call__(self, x) -> Tensor:
        width = x.shape[-1]
        if width != self.in_features:
            raise ShapeError(f"expected input width {self.in_features}, got {width}")
        return self.out(self.hidden(x).tanh())
