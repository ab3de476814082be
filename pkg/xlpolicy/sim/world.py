"""
Grid desk world: pick, place and stack with a discrete gripper

Cells are addressed (x, y) on a G x G table; objects rest at integer levels
0.. and the gripper flies at z in 1..Z. A held object hangs one level below
the gripper and moves with it.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from xlpolicy.config import TASKS, SimConfig
from xlpolicy.errors import ContractError, StateError
from xlpolicy.fusion import Observation
from xlpolicy.numerics import make_rng
from xlpolicy.policy import GRASP, ActionSpec
from xlpolicy.sim.render import render

logger = logging.getLogger(__name__)

STEP_PENALTY = -0.01
SUCCESS_BONUS = 1.0


@dataclass(frozen=True)
class ObjectState:
    id: int
    x: int
    y: int
    level: int

    @property
    def cell(self) -> Tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldState:
    """
    Immutable snapshot of the desk.

    Object 0 is the one the task is about; in ``stack`` object 1 is the base
    it must end up on. ``target`` is the goal cell for ``place``.
    """
    task: str
    gripper: Tuple[int, int, int]
    yaw: int
    held: Optional[int]
    objects: Tuple[ObjectState, ...]
    target: Optional[Tuple[int, int]]
    step_count: int
    max_steps: int
    grid_size: int
    heights: int

    @property
    def grasp(self) -> int:
        return 0 if self.held is None else 1

    def object(self, object_id: int) -> ObjectState:
        return self.objects[object_id]

    def occupant(self, x: int, y: int, level: int) -> Optional[int]:
        for obj in self.objects:
            if (obj.x, obj.y, obj.level) == (x, y, level):
                return obj.id
        return None

    def column_top(self, x: int, y: int, exclude: Optional[int] = None) -> Optional[ObjectState]:
        """Highest object in a column (optionally ignoring one id)"""
        stack = [o for o in self.objects if o.cell == (x, y) and o.id != exclude]
        return max(stack, key=lambda o: o.level) if stack else None

    def stacked_on(self, object_id: int) -> Optional[int]:
        obj = self.object(object_id)
        if obj.level == 0:
            return None
        return self.occupant(obj.x, obj.y, obj.level - 1)

    def is_supported(self, object_id: int) -> bool:
        obj = self.object(object_id)
        return obj.level == 0 or self.occupant(obj.x, obj.y, obj.level - 1) is not None

    @property
    def success(self) -> bool:
        return is_success(self)

    @property
    def done(self) -> bool:
        return self.success or self.step_count >= self.max_steps


def is_success(state: WorldState) -> bool:
    obj = state.object(0)
    if state.task == "pick":
        return state.held == 0 and state.gripper[2] == state.heights
    if state.held is not None:
        return False
    if state.task == "place":
        return obj.cell == state.target and obj.level == 0
    base = state.object(1)
    return obj.cell == base.cell and obj.level == base.level + 1


def initial_state(task: str, seed: int, cfg: SimConfig) -> WorldState:
    """
    Deterministic layout for (task, seed).

    Raises:
        ContractError: unknown task
    """
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}; expected one of {TASKS}")
    rng = make_rng(seed, "reset", task)
    g = cfg.grid_size
    cells = rng.permutation(g * g)[:2]
    first = (int(cells[0] % g), int(cells[0] // g))
    second = (int(cells[1] % g), int(cells[1] // g))
    start = (int(rng.integers(g)), int(rng.integers(g)), cfg.heights)

    objects = [ObjectState(0, first[0], first[1], 0)]
    target = None
    if task == "place":
        target = second
    elif task == "stack":
        objects.append(ObjectState(1, second[0], second[1], 0))
    return WorldState(
        task=task,
        gripper=start,
        yaw=0,
        held=None,
        objects=tuple(objects),
        target=target,
        step_count=0,
        max_steps=cfg.max_steps,
        grid_size=g,
        heights=cfg.heights,
    )


# ============================================================================
# Transition
# ============================================================================

def _try_move(state: WorldState, dx: int, dy: int, dz: int) -> WorldState:
    x, y, z = state.gripper
    nx, ny, nz = x + dx, y + dy, z + dz
    g = state.grid_size
    if not (0 <= nx < g and 0 <= ny < g and 1 <= nz <= state.heights):
        return state
    blocker = state.occupant(nx, ny, nz)
    if blocker is not None and blocker != state.held:
        return state
    if state.held is None:
        return replace(state, gripper=(nx, ny, nz))
    below = state.occupant(nx, ny, nz - 1)
    if below is not None and below != state.held:
        return state
    objects = tuple(
        replace(o, x=nx, y=ny, level=nz - 1) if o.id == state.held else o for o in state.objects
    )
    return replace(state, gripper=(nx, ny, nz), objects=objects)


def _close(state: WorldState) -> WorldState:
    if state.held is not None:
        return state
    x, y, z = state.gripper
    top = state.column_top(x, y)
    if top is None or top.level != z - 1:
        return state
    return replace(state, held=top.id)


def _open(state: WorldState) -> WorldState:
    if state.held is None or not state.is_supported(state.held):
        return state
    return replace(state, held=None)


def _toggle(state: WorldState) -> WorldState:
    return _close(state) if state.held is None else _open(state)


def transition(state: WorldState, entry: np.ndarray) -> WorldState:
    """
    Apply one vocabulary entry. Translation moves one cell per nonzero axis
    sign; yaw turns a quarter; the grasp bit only acts for entries without
    motion, where it toggles (pick up when empty, release when holding).
    A motionless entry without the grasp bit is a no-op. Illegal moves
    leave the pose unchanged.
    """
    dx, dy, dz = (int(np.sign(v)) for v in entry[:3])
    turn = int(np.sign(entry[5]))
    if dx or dy or dz:
        state = _try_move(state, dx, dy, dz)
    if turn:
        state = replace(state, yaw=(state.yaw + turn) % 4)
    if not (dx or dy or dz or turn) and entry[GRASP] >= 0.5:
        state = _toggle(state)
    return replace(state, step_count=state.step_count + 1)


def reward_for(state: WorldState) -> float:
    return STEP_PENALTY + (SUCCESS_BONUS if state.success else 0.0)


# ============================================================================
# Environment
# ============================================================================

class DeskEnv:
    """
    Stateful wrapper used for rollouts.

    Example:
        >>> env = DeskEnv(SimConfig(), spec)
        >>> obs = env.reset("pick", seed=3)
        >>> obs, reward, done, info = env.step(spec.vocabulary[0])
    """

    def __init__(self, cfg: SimConfig, spec: ActionSpec):
        self.cfg = cfg
        self.spec = spec
        self.state: Optional[WorldState] = None

    def reset(self, task: str, seed: int) -> Observation:
        self.state, obs = reset(task, seed, self.cfg)
        return obs

    def step(self, action) -> Tuple[Observation, float, bool, Dict[str, object]]:
        if self.state is None:
            raise StateError("reset() must be called before step()")
        self.state, obs, reward, done = step(self.state, action, self.spec, self.cfg)
        return obs, reward, done, {"success": self.state.success, "steps": self.state.step_count}


def reset(task: str, seed: int, cfg: SimConfig) -> Tuple[WorldState, Observation]:
    state = initial_state(task, seed, cfg)
    return state, render(state, cfg)


def step(state: WorldState, action, spec: ActionSpec, cfg: SimConfig,
         noise_rng: Optional[np.random.Generator] = None) -> Tuple[WorldState, Observation, float, bool]:
    """
    Advance one step with a 7-vector action (snapped to the nearest
    vocabulary entry).

    Returns:
        (next state, observation, reward, done)

    Raises:
        StateError: the episode already finished
    """
    if state.done:
        raise StateError(f"episode finished after {state.step_count} steps; call reset()")
    entry = spec.vocabulary[spec.nearest(action)]
    state = transition(state, entry)
    return state, render(state, cfg, noise_rng), reward_for(state), state.done
