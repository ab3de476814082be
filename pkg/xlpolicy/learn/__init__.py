"""
Losses, advantage estimation, augmentation and the two training phases
"""
from .advantage import GeneralizedAdvantageEstimator, discounted_returns, gae
from .augment import augment, sample_augmentation
from .behavior_cloning import BehaviorCloningTrainer, train_bc
from .losses import bc_loss, critic_loss, ppo_surrogate, ppo_term
from .metrics import MetricsWriter, write_metrics_csv
from .ppo import PPOTrainer, train_ppo

__all__ = [
    "bc_loss",
    "ppo_term",
    "ppo_surrogate",
    "critic_loss",
    "gae",
    "discounted_returns",
    "GeneralizedAdvantageEstimator",
    "augment",
    "sample_augmentation",
    "train_bc",
    "BehaviorCloningTrainer",
    "train_ppo",
    "PPOTrainer",
    "MetricsWriter",
    "write_metrics_csv",
]
