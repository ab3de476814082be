"""
Synthetic desk manipulation environment with a scripted expert
"""
from .dataset import Episode, gen_dataset, generate_episodes, load_episodes, rollout_expert, save_episodes
from .expert import ExpertAgent, expert_action, expert_index
from .render import render
from .world import DeskEnv, WorldState, reset, step

__all__ = [
    "DeskEnv",
    "WorldState",
    "reset",
    "step",
    "render",
    "expert_action",
    "expert_index",
    "ExpertAgent",
    "Episode",
    "rollout_expert",
    "generate_episodes",
    "gen_dataset",
    "save_episodes",
    "load_episodes",
]
