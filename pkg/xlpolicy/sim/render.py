"""
Sensor rendering for the desk world

rgbd channels:
    0  gripper footprint, intensity z / Z, with a yaw marker pixel
    1  objects (top of each column), intensity (id + 1) / n_objects
    2  goal marker (place target cell, or the stack base column)
    3  height map, (top level + 1) / (Z + 1)
"""
import math
from typing import TYPE_CHECKING, Optional

import numpy as np

from xlpolicy.config import SimConfig
from xlpolicy.fusion import Observation

if TYPE_CHECKING:
    from xlpolicy.sim.world import WorldState


def _cell_block(image: np.ndarray, x: int, y: int, px: int, channel: int, value: float) -> None:
    image[y * px:(y + 1) * px, x * px:(x + 1) * px, channel] = value


def render_rgbd(state: "WorldState", cfg: SimConfig) -> np.ndarray:
    px = cfg.cell_px
    image = np.zeros((cfg.image_size, cfg.image_size, 4))
    n_objects = len(state.objects)

    for x in range(state.grid_size):
        for y in range(state.grid_size):
            top = state.column_top(x, y)
            if top is None:
                continue
            _cell_block(image, x, y, px, 1, (top.id + 1) / n_objects)
            _cell_block(image, x, y, px, 3, (top.level + 1) / (state.heights + 1))

    if state.task == "place":
        _cell_block(image, state.target[0], state.target[1], px, 2, 1.0)
    elif state.task == "stack":
        base = state.object(1)
        _cell_block(image, base.x, base.y, px, 2, 1.0)

    gx, gy, gz = state.gripper
    _cell_block(image, gx, gy, px, 0, gz / state.heights)
    row, col = gy * px, gx * px
    mid, edge = px // 2, px - 1
    marker = {0: (row + mid, col + edge), 1: (row + edge, col + mid), 2: (row + mid, col), 3: (row, col + mid)}
    image[marker[state.yaw % 4] + (0,)] = 1.0
    return image


def render_lidar(state: "WorldState", cfg: SimConfig) -> np.ndarray:
    """
    Planar range scan from the gripper's column, first beam along its yaw.

    Obstacles are the table edges and every other occupied column.
    Ranges are metres clipped to ``lidar_max_range_m``.
    """
    g = state.grid_size
    gx, gy, _ = state.gripper
    origin = np.array([gx + 0.5, gy + 0.5])
    angles = state.yaw * (math.pi / 2) + 2.0 * math.pi * np.arange(cfg.lidar_beams) / cfg.lidar_beams
    direction = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        inverse = 1.0 / direction
        to_low = (0.0 - origin) * inverse
        to_high = (g - origin) * inverse
        wall = np.maximum(to_low, to_high).min(axis=1)

        hits = np.full(cfg.lidar_beams, np.inf)
        columns = {o.cell for o in state.objects} - {(gx, gy)}
        for cx, cy in sorted(columns):
            near = (np.array([cx, cy]) - origin) * inverse
            far = (np.array([cx + 1, cy + 1]) - origin) * inverse
            t_enter = np.minimum(near, far).max(axis=1)
            t_exit = np.maximum(near, far).min(axis=1)
            hit = (t_exit >= t_enter) & (t_enter > 0)
            hits = np.where(hit, np.minimum(hits, t_enter), hits)

    distance = np.minimum(wall, hits) * cfg.cell_size_m
    return np.clip(distance, 0.0, cfg.lidar_max_range_m)


def render_touch(state: "WorldState", cfg: SimConfig) -> np.ndarray:
    """Finger pads read 1 while holding; support pads read 1 when the held object rests on something, else 0.5"""
    touch = np.zeros(cfg.touch_size)
    if state.held is None:
        return touch
    half = cfg.touch_size // 2
    touch[:half] = 1.0
    touch[half:] = 1.0 if state.is_supported(state.held) else 0.5
    return touch


def render(state: "WorldState", cfg: SimConfig, noise_rng: Optional[np.random.Generator] = None) -> Observation:
    """
    Render all three modalities. Touch noise is added only when both
    ``cfg.touch_noise_std`` > 0 and a generator is supplied.
    """
    touch = render_touch(state, cfg)
    if cfg.touch_noise_std > 0 and noise_rng is not None:
        touch = np.clip(touch + noise_rng.normal(0.0, cfg.touch_noise_std, size=touch.shape), 0.0, 1.0)
    return Observation(rgbd=render_rgbd(state, cfg), lidar=render_lidar(state, cfg), touch=touch)
