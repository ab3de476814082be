"""
PPO fine-tuning in the desk environment

Each iteration:
1. roll out complete episodes with the current policy (sampling from the
   softmax) until at least ``rollout_steps`` steps are collected
2. recompute the rollout log-probabilities and values with a no-grad pass
   that segments episodes exactly like the update does, and freeze them as
   pi_old / V_old
3. GAE advantages and return targets (terminal bootstrap is 0)
4. ``epochs`` passes of minibatch Adam on -L_clip + c_v * critic MSE
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from xlpolicy.agent import StreamingAgent
from xlpolicy.config import TrainConfig
from xlpolicy.errors import DivergenceError, NonFiniteGradientError
from xlpolicy.fusion import Observation, stack_observations
from xlpolicy.learn.advantage import GeneralizedAdvantageEstimator
from xlpolicy.learn.behavior_cloning import episode_batches
from xlpolicy.learn.losses import critic_loss, ppo_surrogate
from xlpolicy.learn.metrics import MetricsWriter
from xlpolicy.models import MetricRow
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.numerics import Adam, Tensor, concat, log_softmax, make_rng, no_grad
from xlpolicy.sim.dataset import episode_seed
from xlpolicy.sim.world import DeskEnv

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """One on-policy episode plus the frozen quantities for the update"""
    task: str
    observations: Observation
    actions: np.ndarray
    rewards: np.ndarray
    success: bool
    old_log_probs: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


def action_log_probs(q: Tensor, actions: np.ndarray) -> Tensor:
    """log pi(a_t | s_t) for the taken actions, differentiable through q"""
    return log_softmax(q, axis=-1)[np.arange(len(actions)), actions]


class PPOTrainer:
    def __init__(self, env: DeskEnv, model: XlPolicyNetwork, cfg: TrainConfig, seed: int = 0,
                 metrics: Optional[MetricsWriter] = None):
        self.env = env
        self.model = model
        self.cfg = cfg
        self.seed = seed
        self.estimator = GeneralizedAdvantageEstimator(cfg.gamma, cfg.lam)
        self.optimizer = Adam(dict(model.named_parameters()), lr=cfg.lr) if cfg.lr > 0 else None
        self.metrics = metrics if metrics is not None else MetricsWriter()
        self.iteration_returns: List[float] = []
        self._batch = 0
        self._last_good: Optional[Dict[str, np.ndarray]] = None

    # ------------------------------------------------------------------
    # Rollouts
    # ------------------------------------------------------------------

    def collect_rollouts(self, iteration: int) -> List[Trajectory]:
        tasks = self.env.cfg.tasks
        rng = make_rng(self.seed, "ppo", "policy", iteration)
        agent = StreamingAgent(self.model, self.cfg.segment_len)
        trajectories: List[Trajectory] = []
        steps = 0
        while steps < self.cfg.rollout_steps:
            k = len(trajectories)
            task = tasks[k % len(tasks)]
            obs = self.env.reset(task, episode_seed(self.seed, iteration * 100_003 + k))
            agent.reset()
            frames, actions, rewards = [], [], []
            done = False
            info: Dict[str, object] = {"success": False}
            while not done:
                index, _, _ = agent.sample(obs, rng)
                frames.append(obs)
                actions.append(index)
                obs, reward, done, info = self.env.step(self.model.spec.vocabulary[index])
                rewards.append(reward)
            trajectories.append(Trajectory(
                task=task,
                observations=stack_observations(frames),
                actions=np.asarray(actions, dtype=np.int64),
                rewards=np.asarray(rewards, dtype=np.float64),
                success=bool(info["success"]),
            ))
            steps += len(rewards)
        return trajectories

    def freeze_old_policy(self, trajectories: Sequence[Trajectory]) -> None:
        """Snapshot pi_old log-probs and compute advantages / return targets"""
        with no_grad():
            for traj in trajectories:
                out, _ = self.model.forward_episode(traj.observations, self.cfg.segment_len)
                traj.old_log_probs = action_log_probs(out.q, traj.actions).data.copy()
                values = np.append(out.value.data, 0.0)
                traj.advantages, traj.returns = self.estimator.compute_advantages(traj.rewards, values)

    # ------------------------------------------------------------------
    # Update
    # ------------------------------------------------------------------

    def batch_loss(self, trajectories: Sequence[Trajectory]) -> Tuple[Tensor, Tensor, Tensor]:
        """(surrogate, critic loss, ratios) for a minibatch of trajectories"""
        log_probs, values = [], []
        for traj in trajectories:
            out, _ = self.model.forward_episode(traj.observations, self.cfg.segment_len)
            log_probs.append(action_log_probs(out.q, traj.actions))
            values.append(out.value)
        log_prob = concat(log_probs, axis=0) if len(log_probs) > 1 else log_probs[0]
        value = concat(values, axis=0) if len(values) > 1 else values[0]
        old = np.concatenate([t.old_log_probs for t in trajectories])
        advantages = np.concatenate([t.advantages for t in trajectories])
        returns = np.concatenate([t.returns for t in trajectories])
        surrogate = ppo_surrogate(log_prob, old, advantages, self.cfg.clip_eps)
        ratios = np.exp(log_prob.data - old)
        return surrogate, critic_loss(value, returns), Tensor(ratios)

    def _diverged(self, detail: Dict[str, object]) -> DivergenceError:
        diagnostics = {"phase": "ppo", "batch": self._batch, **detail}
        logger.error(f"PPO diverged: {diagnostics}")
        return DivergenceError(f"PPO diverged at batch {self._batch}", diagnostics, self._last_good)

    def update(self, trajectories: Sequence[Trajectory], iteration: int, mean_return: float) -> None:
        cfg = self.cfg
        rng = make_rng(self.seed, "ppo", "shuffle", iteration)
        lengths = [len(t) for t in trajectories]
        for epoch in range(cfg.epochs):
            for indices in episode_batches(lengths, cfg.batch_size, rng):
                self.model.zero_grad()
                surrogate, critic, ratios = self.batch_loss([trajectories[i] for i in indices])
                actor = -surrogate
                if not np.isfinite(actor.item()):
                    raise self._diverged({"actor_loss": actor.item(), "iteration": iteration, "epoch": epoch})
                if self.optimizer is not None:
                    (actor + cfg.value_coef * critic).backward()
                    try:
                        self.optimizer.step()
                    except NonFiniteGradientError as e:
                        raise self._diverged({"non_finite_gradients": e.diagnostics}) from e
                    self._last_good = self.model.state_dict()

                r = ratios.data
                clipped = (r < 1.0 - cfg.clip_eps) | (r > 1.0 + cfg.clip_eps)
                self.metrics.append(MetricRow(
                    phase="ppo",
                    batch=self._batch,
                    actor_loss=actor.item(),
                    critic_loss=critic.item(),
                    episode_return=mean_return,
                    aux={
                        "iteration": float(iteration),
                        "epoch": float(epoch),
                        "ratio_max_dev": float(np.abs(r - 1.0).max()),
                        "clip_fraction": float(clipped.mean()),
                    },
                ))
                if self._batch % cfg.log_every == 0:
                    logger.info(
                        f"ppo iteration {iteration} epoch {epoch} batch {self._batch}: "
                        f"actor={actor.item():.5f} critic={critic.item():.5f} return={mean_return:.4f}"
                    )
                self._batch += 1

    def train(self) -> List[MetricRow]:
        self._last_good = self.model.state_dict()
        for iteration in range(self.cfg.ppo_iterations):
            trajectories = self.collect_rollouts(iteration)
            self.freeze_old_policy(trajectories)
            mean_return = float(np.mean([t.rewards.sum() for t in trajectories]))
            success = float(np.mean([t.success for t in trajectories]))
            self.iteration_returns.append(mean_return)
            logger.info(
                f"ppo iteration {iteration}: {len(trajectories)} episodes, "
                f"mean return {mean_return:.4f}, success {success:.2%}"
            )
            self.update(trajectories, iteration, mean_return)
        return self.metrics.rows


def train_ppo(env: DeskEnv, model: XlPolicyNetwork, cfg: TrainConfig, seed: int = 0,
              metrics: Optional[MetricsWriter] = None) -> Tuple[XlPolicyNetwork, List[MetricRow]]:
    """
    Raises:
        DivergenceError: NaN actor loss or non-finite gradients; carries the
            last good parameter snapshot
    """
    rows = PPOTrainer(env, model, cfg, seed, metrics).train()
    return model, rows
