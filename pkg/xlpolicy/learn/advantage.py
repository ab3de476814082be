"""
Advantage estimation

GeneralizedAdvantageEstimator runs the backward recursion

    delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)
    A_t     = delta_t + gamma * lam * A_{t+1}

over one trajectory whose ``values`` carry the bootstrap entry V(s_T)
(0 when the episode ended).
"""
from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np

from xlpolicy.errors import ContractError


class BaseAdvantageEstimator(ABC):
    """Turns one trajectory into (advantages, return targets)"""

    @abstractmethod
    def compute_advantages(self, rewards: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError()


def _check_lengths(rewards: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.ndim != 1 or values.shape != (rewards.shape[0] + 1,):
        raise ContractError(
            f"values must hold one more entry than rewards, got {values.shape} for {rewards.shape}"
        )
    return rewards, values


class GeneralizedAdvantageEstimator(BaseAdvantageEstimator):
    def __init__(self, gamma: float = 0.99, lam: float = 0.95):
        self.gamma = gamma
        self.lam = lam

    def compute_advantages(self, rewards: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            advantages: A_t, shape (T,)
            returns: A_t + V(s_t), the critic targets
        """
        rewards, values = _check_lengths(rewards, values)
        advantages = np.zeros_like(rewards)
        running = 0.0
        for t in reversed(range(rewards.shape[0])):
            delta = rewards[t] + self.gamma * values[t + 1] - values[t]
            running = delta + self.gamma * self.lam * running
            advantages[t] = running
        return advantages, advantages + values[:-1]


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float = 0.99, lam: float = 0.95) -> np.ndarray:
    """
    Example:
        >>> gae(np.array([1.0]), np.array([0.0, 0.0]), gamma=0.99, lam=0.95)
        array([1.])
    """
    advantages, _ = GeneralizedAdvantageEstimator(gamma, lam).compute_advantages(rewards, values)
    return advantages


def discounted_returns(rewards: np.ndarray, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """G_t = r_t + gamma * G_{t+1}, seeded with ``bootstrap``"""
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.zeros_like(rewards)
    running = float(bootstrap)
    for t in reversed(range(rewards.shape[0])):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns
