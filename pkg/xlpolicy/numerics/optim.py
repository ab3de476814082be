"""
Adam optimizer with bias correction
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from xlpolicy.errors import ContractError, NonFiniteGradientError, ShapeError
from xlpolicy.numerics.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    Per-parameter moment buffers plus hyperparameters.

    Moment buffers are created lazily on a parameter's first non-None
    gradient and always match that parameter's shape.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractError(f"Adam learning rate must be positive, got {self.lr}")
        for name in ("beta1", "beta2", "eps_adam"):
            if not getattr(self, name) > 0:
                raise ContractError(f"Adam {name} must be positive, got {getattr(self, name)}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
) -> AdamState:
    """
    Apply one Adam update in place.

    Parameters whose gradient is None are skipped (their moments are left
    alone). The step counter advances by exactly one per call.

    Raises:
        ShapeError: a gradient's shape differs from its parameter
        NonFiniteGradientError: any gradient holds NaN/Inf; nothing is
            modified (parameters, moments and step count stay as they were)
    """
    bad: Dict[str, int] = {}
    for name, grad in grads.items():
        if grad is None:
            continue
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name}")
        if grad.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter has {params[name].shape}")
        count = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
        if count:
            bad[name] = count
    if bad:
        logger.error(f"Rejected Adam update at step {state.step_count}: non-finite gradients {bad}")
        raise NonFiniteGradientError(f"non-finite gradients in {sorted(bad)}", diagnostics=bad)

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, grad in grads.items():
        if grad is None:
            continue
        param = params[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_adam)
    return state


class Adam:
    """Adam bound to a module's named parameters"""

    def __init__(self, named_params: Mapping[str, Tensor], lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params: Dict[str, Tensor] = dict(named_params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps_adam=eps)

    def step(self) -> None:
        adam_step(self.params, {name: p.grad for name, p in self.params.items()}, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
