"""
Expert demonstration episodes and the line-delimited episode file

File layout:
    XLPOLICY-EPISODES v1
    {"meta": {...}, "rgbd": {"shape": [...], "data": [...]}, ...}
    ...
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from xlpolicy.config import SimConfig
from xlpolicy.errors import ContractError, EpisodeFormatError, ExpertError
from xlpolicy.files import atomic_write_text
from xlpolicy.fusion import Observation, stack_observations, validate_observation
from xlpolicy.models import ArrayPayload, EpisodeMeta, EpisodeRecord
from xlpolicy.numerics import make_rng
from xlpolicy.policy import ActionSpec
from xlpolicy.sim.expert import expert_index
from xlpolicy.sim.world import reset, step

logger = logging.getLogger(__name__)

EPISODE_HEADER = "XLPOLICY-EPISODES v1"


@dataclass
class Episode:
    """
    One demonstration: observation t is what the expert saw before taking
    action t and receiving reward t.
    """
    observations: Observation
    actions: np.ndarray
    action_indices: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    meta: EpisodeMeta

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())

    def validate(self) -> None:
        """
        Raises:
            EpisodeFormatError: inconsistent lengths, non-finite rewards or
                a terminal flag anywhere but the last step
        """
        n = len(self)
        lengths = {
            "rgbd": len(self.observations.rgbd),
            "lidar": len(self.observations.lidar),
            "touch": len(self.observations.touch),
            "actions": len(self.actions),
            "action_indices": len(self.action_indices),
            "dones": len(self.dones),
        }
        bad = {k: v for k, v in lengths.items() if v != n}
        if n < 1 or bad:
            raise EpisodeFormatError(f"episode has {n} rewards but mismatched fields {bad}")
        if not np.all(np.isfinite(self.rewards)):
            raise EpisodeFormatError("episode rewards must be finite")
        if not self.dones[-1] or self.dones[:-1].any():
            raise EpisodeFormatError("episode must have exactly one terminal step, at the end")
        if self.meta.length != n:
            raise EpisodeFormatError(f"metadata length {self.meta.length} does not match {n} steps")


def rollout_expert(task: str, seed: int, cfg: SimConfig, spec: ActionSpec) -> Episode:
    """
    Record the scripted expert from ``reset(task, seed)`` until done.

    Raises:
        ExpertError: the expert did not finish the task within max_steps
    """
    state, obs = reset(task, seed, cfg)
    frames, actions, indices, rewards, dones = [], [], [], [], []
    done = False
    while not done:
        index = expert_index(state, spec)
        frames.append(obs)
        actions.append(spec.vocabulary[index])
        indices.append(index)
        state, obs, reward, done = step(state, spec.vocabulary[index], spec, cfg)
        rewards.append(reward)
        dones.append(done)
    if not state.success:
        raise ExpertError(f"expert failed {task} seed={seed} within {cfg.max_steps} steps")
    return Episode(
        observations=stack_observations(frames),
        actions=np.asarray(actions, dtype=np.float64),
        action_indices=np.asarray(indices, dtype=np.int64),
        rewards=np.asarray(rewards, dtype=np.float64),
        dones=np.asarray(dones, dtype=bool),
        meta=EpisodeMeta(seed=seed, task=task, success=True, length=len(rewards), vocab_digest=spec.digest()),
    )


def episode_seed(seed: int, index: int) -> int:
    return int(make_rng(seed, "episode", index).integers(2**31 - 1))


def generate_episodes(n_episodes: int, tasks: Sequence[str], seed: int, cfg: SimConfig,
                      spec: ActionSpec) -> List[Episode]:
    """
    Expert episodes, round-robin over ``tasks``.

    Raises:
        ContractError: n_episodes < 1 or no tasks
    """
    if n_episodes < 1:
        raise ContractError(f"need at least one episode, got {n_episodes}")
    if not tasks:
        raise ContractError("need at least one task")
    return [
        rollout_expert(tasks[i % len(tasks)], episode_seed(seed, i), cfg, spec)
        for i in range(n_episodes)
    ]


# ============================================================================
# Episode file I/O
# ============================================================================

def episode_to_record(episode: Episode) -> EpisodeRecord:
    obs = episode.observations
    return EpisodeRecord(
        meta=episode.meta,
        rgbd=ArrayPayload.from_array(obs.rgbd),
        lidar=ArrayPayload.from_array(obs.lidar),
        touch=ArrayPayload.from_array(obs.touch),
        actions=ArrayPayload.from_array(episode.actions),
        action_indices=[int(i) for i in episode.action_indices],
        rewards=[float(r) for r in episode.rewards],
        dones=[bool(d) for d in episode.dones],
    )


def record_to_episode(record: EpisodeRecord) -> Episode:
    episode = Episode(
        observations=Observation(
            rgbd=record.rgbd.to_array(),
            lidar=record.lidar.to_array(),
            touch=record.touch.to_array(),
        ),
        actions=record.actions.to_array(),
        action_indices=np.asarray(record.action_indices, dtype=np.int64),
        rewards=np.asarray(record.rewards, dtype=np.float64),
        dones=np.asarray(record.dones, dtype=bool),
        meta=record.meta,
    )
    episode.validate()
    return episode


def dumps_episodes(episodes: Sequence[Episode]) -> str:
    lines = [EPISODE_HEADER]
    for episode in episodes:
        lines.append(json.dumps(episode_to_record(episode).model_dump(), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_episodes(path: Union[str, Path], episodes: Sequence[Episode]) -> Path:
    return atomic_write_text(path, dumps_episodes(episodes))


def load_episodes(path: Union[str, Path], max_range: Optional[float] = None) -> List[Episode]:
    """
    Read an episode file. With ``max_range`` every observation is also
    checked against the sensor ranges.

    Raises:
        EpisodeFormatError: unknown header/version, a malformed record or
            out-of-range observations
        OSError: the file cannot be read
    """
    path = Path(path)
    episodes = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != EPISODE_HEADER:
            raise EpisodeFormatError(f"{path}: unsupported episode file header {header!r}")
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                record = EpisodeRecord.model_validate_json(line)
                episode = record_to_episode(record)
                if max_range is not None:
                    validate_observation(episode.observations, max_range)
                episodes.append(episode)
            except (ValidationError, ValueError) as e:
                if isinstance(e, EpisodeFormatError):
                    raise EpisodeFormatError(f"{path}:{line_no}: {e}") from e
                raise EpisodeFormatError(f"{path}:{line_no}: malformed episode record: {e}") from e
    logger.info(f"Loaded {len(episodes)} episodes from {path}")
    return episodes


def gen_dataset(out_path: Union[str, Path], n_episodes: int, tasks: Sequence[str], seed: int,
                cfg: SimConfig, spec: ActionSpec) -> List[Episode]:
    """Generate expert episodes and write them to ``out_path``"""
    episodes = generate_episodes(n_episodes, tasks, seed, cfg, spec)
    save_episodes(out_path, episodes)
    mean_len = float(np.mean([len(e) for e in episodes]))
    logger.info(f"Generated {len(episodes)} episodes (mean length {mean_len:.1f}) -> {out_path}")
    return episodes
