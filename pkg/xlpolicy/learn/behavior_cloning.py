"""
Behavior cloning on expert episodes

Each minibatch is a set of whole episodes (shuffled, accumulated until it
holds at least ``batch_size`` steps). Every episode runs through the
network segment by segment with memory carried across segments; the
predicted action is the policy's expected vocabulary vector and the loss is
its squared error against the expert. With ``critic_warm_start`` the value
head is also fitted to the demonstrations' discounted returns.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from xlpolicy.config import TrainConfig
from xlpolicy.errors import ContractError, DivergenceError, NonFiniteGradientError
from xlpolicy.learn.advantage import discounted_returns
from xlpolicy.learn.augment import augment_sequence
from xlpolicy.learn.losses import bc_loss, critic_loss
from xlpolicy.learn.metrics import MetricsWriter
from xlpolicy.models import MetricRow
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.numerics import Adam, concat, make_rng
from xlpolicy.policy import expected_action, policy_from_q, validate_vocabulary
from xlpolicy.sim.dataset import Episode

logger = logging.getLogger(__name__)


def episode_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> List[List[int]]:
    """Shuffle episode indices and group them into batches of >= batch_size steps"""
    batches, current, steps = [], [], 0
    for index in rng.permutation(len(lengths)):
        current.append(int(index))
        steps += lengths[index]
        if steps >= batch_size:
            batches.append(current)
            current, steps = [], 0
    if current:
        batches.append(current)
    return batches


class BehaviorCloningTrainer:
    """Minibatch Adam on the action MSE (plus the critic warm start)"""

    def __init__(self, model: XlPolicyNetwork, cfg: TrainConfig, seed: int = 0,
                 metrics: Optional[MetricsWriter] = None):
        self.model = model
        self.cfg = cfg
        self.seed = seed
        self.spec = model.spec
        self.optimizer = Adam(dict(model.named_parameters()), lr=cfg.lr) if cfg.lr > 0 else None
        self.scales = self.spec.scales() if cfg.scale_actions else None
        self.max_range = model.config.sim.lidar_max_range_m
        self.metrics = metrics if metrics is not None else MetricsWriter()
        self._last_good: Optional[Dict[str, np.ndarray]] = None

    def _check_dataset(self, episodes: Sequence[Episode]) -> None:
        if not episodes:
            raise ContractError("behavior cloning needs a non-empty dataset")
        for episode in episodes:
            validate_vocabulary(self.spec, episode.meta.vocab_digest)

    def batch_loss(self, episodes: Sequence[Episode], targets: Sequence[np.ndarray],
                   rng: np.random.Generator):
        """Scaled BC loss, critic loss and raw action MSE for one minibatch"""
        preds, values = [], []
        for episode in episodes:
            obs = augment_sequence(episode.observations, rng, self.cfg.augment, self.max_range)
            out, _ = self.model.forward_episode(obs, self.cfg.segment_len)
            preds.append(expected_action(policy_from_q(out.q), self.spec))
            values.append(out.value)
        pred = concat(preds, axis=0) if len(preds) > 1 else preds[0]
        value = concat(values, axis=0) if len(values) > 1 else values[0]
        expert = np.concatenate([e.actions for e in episodes], axis=0)
        actor = bc_loss(pred, expert, self.scales)
        critic = critic_loss(value, np.concatenate(targets))
        raw_mse = bc_loss(pred.data, expert).item()
        return actor, critic, raw_mse

    def _diverged(self, batch: int, detail: Dict[str, object]) -> DivergenceError:
        diagnostics = {"phase": "bc", "batch": batch, **detail}
        logger.error(f"Behavior cloning diverged: {diagnostics}")
        return DivergenceError(f"behavior cloning diverged at batch {batch}", diagnostics, self._last_good)

    def train(self, episodes: Sequence[Episode]) -> List[MetricRow]:
        self._check_dataset(episodes)
        cfg = self.cfg
        targets = [discounted_returns(e.rewards, cfg.gamma) for e in episodes]
        lengths = [len(e) for e in episodes]
        shuffle_rng = make_rng(self.seed, "bc", "shuffle")
        augment_rng = make_rng(self.seed, "bc", "augment")
        budget = cfg.bc_steps
        self._last_good = self.model.state_dict()

        batch = 0
        epoch = 0
        while (budget is None and epoch < cfg.bc_epochs) or (budget is not None and batch < budget):
            for indices in episode_batches(lengths, cfg.batch_size, shuffle_rng):
                if budget is not None and batch >= budget:
                    break
                self.model.zero_grad()
                chosen = [episodes[i] for i in indices]
                actor, critic, raw_mse = self.batch_loss(chosen, [targets[i] for i in indices], augment_rng)
                if not (np.isfinite(actor.item()) and np.isfinite(critic.item())):
                    raise self._diverged(batch, {"actor_loss": actor.item(), "critic_loss": critic.item()})

                if self.optimizer is not None:
                    loss = actor + cfg.value_coef * critic if cfg.critic_warm_start else actor
                    loss.backward()
                    try:
                        self.optimizer.step()
                    except NonFiniteGradientError as e:
                        raise self._diverged(batch, {"non_finite_gradients": e.diagnostics}) from e
                    self._last_good = self.model.state_dict()

                row = MetricRow(
                    phase="bc",
                    batch=batch,
                    actor_loss=actor.item(),
                    critic_loss=critic.item(),
                    episode_return=float(np.mean([e.episode_return for e in chosen])),
                    mse=raw_mse,
                    aux={"steps": float(sum(len(e) for e in chosen)), "epoch": float(epoch)},
                )
                self.metrics.append(row)
                if batch % cfg.log_every == 0:
                    logger.info(
                        f"bc epoch {epoch} batch {batch}: actor={row.actor_loss:.5f} "
                        f"critic={row.critic_loss:.5f} mse={raw_mse:.6f}"
                    )
                batch += 1
            epoch += 1
        logger.info(f"Behavior cloning finished after {batch} batches")
        return self.metrics.rows


def train_bc(dataset: Sequence[Episode], model: XlPolicyNetwork, cfg: TrainConfig, seed: int = 0,
             metrics: Optional[MetricsWriter] = None) -> Tuple[XlPolicyNetwork, List[MetricRow]]:
    """
    Raises:
        ContractError: empty dataset
        ConfigError: dataset recorded with a different action vocabulary
        DivergenceError: non-finite loss or gradients
    """
    rows = BehaviorCloningTrainer(model, cfg, seed, metrics).train(dataset)
    return model, rows
