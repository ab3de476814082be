"""
Scripted expert for the desk tasks

Greedy Manhattan routing at travel height: climb to Z, move along x, then
y, descend, grasp; carry the object to its goal the same way and
grasp again to release.
"""
import logging
from typing import Optional

import numpy as np

from xlpolicy.errors import ExpertError
from xlpolicy.fusion import Observation
from xlpolicy.policy import ACTION_DIM, GRASP, ActionSpec
from xlpolicy.sim.world import WorldState

logger = logging.getLogger(__name__)


def _primitive(axis: Optional[int] = None, sign: int = 0, grasp: int = 0) -> np.ndarray:
    vec = np.zeros(ACTION_DIM)
    if axis is not None:
        vec[axis] = sign
    vec[GRASP] = grasp
    return vec


UP = _primitive(2, 1)
DOWN = _primitive(2, -1)
TOGGLE = _primitive(grasp=1)


def _travel(state: WorldState, goal_x: int, goal_y: int) -> np.ndarray:
    x, y, z = state.gripper
    if z < state.heights:
        return UP
    if goal_x != x:
        return _primitive(0, 1 if goal_x > x else -1)
    return _primitive(1, 1 if goal_y > y else -1)


def expert_direction(state: WorldState) -> np.ndarray:
    """
    Unit-sign 7-vector of the next expert primitive.

    Raises:
        ExpertError: the task is already complete or cannot be solved from
            this state (wrong object held, object buried, base covered)
    """
    if state.success:
        raise ExpertError("task is already complete")
    if state.held not in (None, 0):
        raise ExpertError(f"holding object {state.held}, expected object 0 or nothing")
    obj = state.object(0)
    x, y, z = state.gripper

    if state.held is None:
        top = state.column_top(obj.x, obj.y)
        if top is None or top.id != 0:
            raise ExpertError(f"object 0 at {obj.cell} is covered")
        if (x, y) != obj.cell:
            return _travel(state, obj.x, obj.y)
        return DOWN if z > obj.level + 1 else TOGGLE

    if state.task == "pick":
        return UP

    if state.task == "place":
        goal, goal_level = state.target, 0
    else:
        base = state.object(1)
        top = state.column_top(base.x, base.y, exclude=0)
        if top is None or top.id != 1:
            raise ExpertError(f"stack base at {base.cell} is covered")
        goal, goal_level = base.cell, base.level + 1

    if (x, y) != goal:
        return _travel(state, goal[0], goal[1])
    return DOWN if z - 1 > goal_level else TOGGLE


def expert_index(state: WorldState, spec: ActionSpec) -> int:
    """
    Vocabulary index of the expert primitive.

    Raises:
        ExpertError: the vocabulary has no entry for the primitive
    """
    direction = expert_direction(state)
    scales = spec.scales()
    index = spec.nearest(direction * scales)
    if not np.allclose(spec.vocabulary[index] / scales, direction):
        raise ExpertError(f"vocabulary has no entry for expert primitive {direction.tolist()}")
    return index


def expert_action(state: WorldState, spec: ActionSpec) -> np.ndarray:
    """Expert 7-vector, taken verbatim from the vocabulary"""
    return spec.vocabulary[expert_index(state, spec)].copy()


def expert_path_length(state: WorldState) -> int:
    """Steps the expert needs from a fresh layout (travel height, nothing held)"""
    obj = state.object(0)
    x, y, z = state.gripper
    to_object = abs(obj.x - x) + abs(obj.y - y)
    descend = z - (obj.level + 1)
    steps = to_object + descend + 1
    if state.task == "pick":
        return steps + (state.heights - (obj.level + 1))
    if state.task == "place":
        goal, goal_level = state.target, 0
    else:
        base = state.object(1)
        goal, goal_level = base.cell, base.level + 1
    climb = state.heights - (obj.level + 1)
    carry = abs(goal[0] - obj.x) + abs(goal[1] - obj.y)
    lower = state.heights - 1 - goal_level
    return steps + climb + carry + lower + 1


class ExpertAgent:
    """Expert wrapped in the agent interface used by evaluation"""

    def __init__(self, spec: ActionSpec):
        self.spec = spec

    def reset(self) -> None:
        pass

    def act(self, obs: Observation, state: WorldState) -> int:
        return expert_index(state, self.spec)
