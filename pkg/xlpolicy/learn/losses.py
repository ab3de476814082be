"""
Training objectives

- bc_loss: mean squared action error, (1/N) sum_i ||a_hat_i - a_i||^2
- ppo_term / ppo_surrogate: clipped policy-ratio objective (maximized, so
  the trainer minimizes its negative)
- critic_loss: mean squared error between values and return targets
"""
from typing import Optional

import numpy as np

from xlpolicy.errors import ContractError, ShapeError
from xlpolicy.numerics import Tensor, as_tensor, minimum


def _rows(x, name: str) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be (N, D), got shape {x.shape}")
    return x


def bc_loss(pred_actions, expert_actions, scales: Optional[np.ndarray] = None) -> Tensor:
    """
    Behavior-cloning loss over N action vectors.

    Args:
        pred_actions: (N, 7) predicted actions, differentiable
        expert_actions: (N, 7) demonstration actions
        scales: optional per-component divisors applied to both sides

    Raises:
        ContractError: N differs between the two, or N < 1
    """
    pred = _rows(pred_actions, "pred_actions")
    expert = _rows(expert_actions, "expert_actions")
    if pred.shape[0] != expert.shape[0] or pred.shape[0] < 1:
        raise ContractError(f"bc_loss needs N >= 1 matching rows, got {pred.shape[0]} and {expert.shape[0]}")
    if pred.shape[1] != expert.shape[1]:
        raise ShapeError(f"action widths differ: {pred.shape[1]} vs {expert.shape[1]}")
    residual = pred - expert
    if scales is not None:
        residual = residual * (1.0 / np.asarray(scales, dtype=np.float64))
    return (residual * residual).sum(axis=1).mean()


def ppo_term(ratio: float, a_hat: float, eps: float) -> float:
    """
    min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A) for one sample.

    Raises:
        ContractError: ratio <= 0
    """
    if not ratio > 0:
        raise ContractError(f"policy ratio must be positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
    return min(ratio * a_hat, clipped * a_hat)


def ppo_surrogate(log_probs: Tensor, old_log_probs: np.ndarray, advantages: np.ndarray, eps: float) -> Tensor:
    """
    Batch mean of the clipped objective, differentiable through ``log_probs``.

    Raises:
        ContractError: length mismatch
    """
    old_log_probs = np.asarray(old_log_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if not (log_probs.shape == old_log_probs.shape == advantages.shape):
        raise ContractError(
            f"surrogate inputs disagree: {log_probs.shape}, {old_log_probs.shape}, {advantages.shape}"
        )
    ratio = (log_probs - old_log_probs).exp()
    unclipped = ratio * advantages
    clipped = ratio.clip(1.0 - eps, 1.0 + eps) * advantages
    return minimum(unclipped, clipped).mean()


def critic_loss(values, returns) -> Tensor:
    """
    Raises:
        ContractError: length mismatch
    """
    values = as_tensor(values)
    returns = np.asarray(returns.data if isinstance(returns, Tensor) else returns, dtype=np.float64)
    if values.shape != returns.shape:
        raise ContractError(f"critic_loss length mismatch: {values.shape} vs {returns.shape}")
    residual = values - returns
    return (residual * residual).mean()
