"""
Greedy-policy evaluation

Two measurements per episode seed:
- success / return: the agent drives the environment from reset until done
- accuracy: the expert drives; at every expert-visited state the agent's
  greedy choice (given the same observation history) is compared with the
  expert's action index
"""
import logging
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np

from xlpolicy.config import RunConfig
from xlpolicy.errors import ContractError
from xlpolicy.fusion import Observation
from xlpolicy.models import EvalReport, TaskReport
from xlpolicy.numerics import make_rng
from xlpolicy.policy import ActionSpec
from xlpolicy.sim.expert import expert_index
from xlpolicy.sim.world import WorldState, reset, step

logger = logging.getLogger(__name__)


class Agent(Protocol):
    def reset(self) -> None: ...

    def act(self, obs: Observation, state: WorldState) -> int: ...


def eval_seed(seed: int, index: int) -> int:
    return int(make_rng(seed, "eval", index).integers(2**31 - 1))


def run_episode(agent: Agent, task: str, seed: int, config: RunConfig, spec: ActionSpec) -> Dict[str, float]:
    """Greedy rollout; returns success (0/1), return and length"""
    agent.reset()
    state, obs = reset(task, seed, config.sim)
    total, done = 0.0, False
    while not done:
        index = agent.act(obs, state)
        state, obs, reward, done = step(state, spec.vocabulary[index], spec, config.sim)
        total += reward
    return {"success": float(state.success), "return": total, "length": float(state.step_count)}


def expert_agreement(agent: Agent, task: str, seed: int, config: RunConfig, spec: ActionSpec) -> List[bool]:
    """Per-step agreement between the agent and the expert along the expert's trajectory"""
    agent.reset()
    state, obs = reset(task, seed, config.sim)
    matches, done = [], False
    while not done:
        target = expert_index(state, spec)
        matches.append(agent.act(obs, state) == target)
        state, obs, _, done = step(state, spec.vocabulary[target], spec, config.sim)
    return matches


def _summarize(results: Sequence[Dict[str, float]], matches: Sequence[bool]) -> TaskReport:
    return TaskReport(
        episodes=len(results),
        success_rate=float(np.mean([r["success"] for r in results])),
        accuracy=float(np.mean(matches)) if matches else 0.0,
        mean_return=float(np.mean([r["return"] for r in results])),
    )


def evaluate(agent: Agent, config: RunConfig, spec: ActionSpec, n_episodes: int, seed: int,
             tasks: Optional[Sequence[str]] = None) -> EvalReport:
    """
    Evaluate ``agent`` on ``n_episodes`` episodes, round-robin over tasks.

    Args:
        agent: anything with ``reset()`` and ``act(obs, state) -> index``
        config: run config (simulator settings)
        spec: action vocabulary the agent indexes into
        n_episodes: number of episodes (>= 1)
        seed: evaluation seed; episode layouts derive from it
        tasks: task names, defaults to ``config.sim.tasks``

    Returns:
        Overall and per-task success rate, accuracy and mean return

    Raises:
        ContractError: n_episodes < 1
    """
    if n_episodes < 1:
        raise ContractError(f"need at least one evaluation episode, got {n_episodes}")
    tasks = list(tasks or config.sim.tasks)

    results: Dict[str, List[Dict[str, float]]] = {t: [] for t in tasks}
    matches: Dict[str, List[bool]] = {t: [] for t in tasks}
    for i in range(n_episodes):
        task = tasks[i % len(tasks)]
        episode_seed = eval_seed(seed, i)
        results[task].append(run_episode(agent, task, episode_seed, config, spec))
        matches[task].extend(expert_agreement(agent, task, episode_seed, config, spec))

    per_task = {t: _summarize(results[t], matches[t]) for t in tasks if results[t]}
    all_results = [r for t in tasks for r in results[t]]
    all_matches = [m for t in tasks for m in matches[t]]
    overall = _summarize(all_results, all_matches)
    report = EvalReport(
        episodes=n_episodes,
        success_rate=overall.success_rate,
        accuracy=overall.accuracy,
        mean_return=overall.mean_return,
        per_task=per_task,
        seed=seed,
    )
    logger.info(
        f"Evaluated {n_episodes} episodes: success {report.success_rate:.2%}, "
        f"accuracy {report.accuracy:.2%}, mean return {report.mean_return:.4f}"
    )
    return report
