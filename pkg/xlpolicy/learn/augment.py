"""
Observation perturbations for behavior cloning

Parameters are sampled first (always in the same order, so the random
stream does not depend on which perturbations are enabled) and then
applied. Expert actions pass through untouched: the perturbations are
robustness noise, not geometric relabeling.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from xlpolicy.config import AugmentConfig
from xlpolicy.fusion import Observation, stack_observations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentParams:
    apply: bool
    shift: Tuple[int, int]          # (dx, dy) pixels
    angle_deg: float
    crop_ratio: float
    crop_offset: Tuple[float, float]
    touch_noise: np.ndarray
    flip: bool


def sample_augmentation(rng: np.random.Generator, cfg: AugmentConfig, touch_size: int) -> AugmentParams:
    """
    Draw one parameter set. Bounds are hard: shift in [-max_shift_px,
    max_shift_px], angle in [-max_rotation_deg, max_rotation_deg], crop
    ratio in [crop_min, 1].
    """
    gate = rng.random()
    shift = rng.integers(-cfg.max_shift_px, cfg.max_shift_px + 1, size=2)
    angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    crop = rng.uniform(cfg.crop_min, 1.0)
    offset = rng.random(2)
    noise = rng.normal(0.0, cfg.touch_noise_std, size=touch_size)
    flip = rng.random()
    return AugmentParams(
        apply=bool(gate < cfg.augment_prob),
        shift=(int(shift[0]), int(shift[1])),
        angle_deg=float(angle),
        crop_ratio=float(crop),
        crop_offset=(float(offset[0]), float(offset[1])),
        touch_noise=noise,
        flip=bool(flip < cfg.flip_prob),
    )


# ============================================================================
# Image operations (H, W, C)
# ============================================================================

def translate_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift content by (dx, dy) pixels; uncovered pixels are zero"""
    h, w = image.shape[:2]
    out = np.zeros_like(image)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_rows = slice(max(0, -dy), h - max(0, dy))
    dst_rows = slice(max(0, dy), h - max(0, -dy))
    src_cols = slice(max(0, -dx), w - max(0, dx))
    dst_cols = slice(max(0, dx), w - max(0, -dx))
    out[dst_rows, dst_cols] = image[src_rows, src_cols]
    return out


def rotate_image(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Nearest-neighbour rotation about the image centre; outside samples are zero"""
    h, w = image.shape[:2]
    theta = math.radians(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    y, x = rows - cy, cols - cx
    src_x = np.rint(math.cos(theta) * x + math.sin(theta) * y + cx).astype(np.int64)
    src_y = np.rint(-math.sin(theta) * x + math.cos(theta) * y + cy).astype(np.int64)
    inside = (src_x >= 0) & (src_x < w) & (src_y >= 0) & (src_y < h)
    out = np.zeros_like(image)
    out[inside] = image[src_y[inside], src_x[inside]]
    return out


def crop_resize(image: np.ndarray, ratio: float, offset: Tuple[float, float] = (0.5, 0.5)) -> np.ndarray:
    """Crop ``ratio`` of each side (at least 1 px) and resize back by nearest neighbour"""
    h, w = image.shape[:2]
    ch, cw = max(1, int(round(ratio * h))), max(1, int(round(ratio * w)))
    top = min(int(offset[1] * (h - ch + 1)), h - ch)
    left = min(int(offset[0] * (w - cw + 1)), w - cw)
    crop = image[top:top + ch, left:left + cw]
    rows = (np.arange(h) * ch) // h
    cols = (np.arange(w) * cw) // w
    return crop[rows][:, cols]


def rotate_scan(scan: np.ndarray, angle_deg: float) -> np.ndarray:
    """Roll a planar scan by the nearest whole number of beams"""
    beams = scan.shape[0]
    return np.roll(scan, int(round(angle_deg / (360.0 / beams))))


# ============================================================================
# Observation-level entry points
# ============================================================================

def apply_augmentation(obs: Observation, params: AugmentParams, cfg: AugmentConfig,
                       max_range: Optional[float] = None) -> Observation:
    if not (cfg.enabled and params.apply):
        return obs
    rgbd, lidar, touch = obs.rgbd, obs.lidar, obs.touch
    if cfg.translate:
        rgbd = translate_image(rgbd, *params.shift)
    if cfg.rotate:
        rgbd = rotate_image(rgbd, params.angle_deg)
        lidar = rotate_scan(lidar, params.angle_deg)
    if cfg.crop:
        rgbd = crop_resize(rgbd, params.crop_ratio, params.crop_offset)
    if cfg.flip and params.flip:
        rgbd = rgbd[:, ::-1].copy()
    if cfg.touch_noise:
        touch = np.clip(touch + params.touch_noise, 0.0, 1.0)
    rgbd = np.clip(rgbd, 0.0, 1.0)
    if max_range is not None:
        lidar = np.clip(lidar, 0.0, max_range)
    return Observation(rgbd=rgbd, lidar=lidar, touch=touch)


def augment(obs: Observation, action: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig,
            max_range: Optional[float] = None) -> Tuple[Observation, np.ndarray]:
    """
    Perturb one frame; the action is returned unchanged.

    With ``cfg.enabled`` false this is the identity and draws nothing.
    """
    if not cfg.enabled:
        return obs, action
    params = sample_augmentation(rng, cfg, obs.touch.shape[-1])
    return apply_augmentation(obs, params, cfg, max_range), action


def augment_sequence(obs: Observation, rng: np.random.Generator, cfg: AugmentConfig,
                     max_range: Optional[float] = None) -> Observation:
    """Independent perturbation per frame of a time-stacked observation"""
    if not cfg.enabled:
        return obs
    frames = []
    for t in range(len(obs)):
        params = sample_augmentation(rng, cfg, obs.touch.shape[-1])
        frames.append(apply_augmentation(obs[t], params, cfg, max_range))
    return stack_observations(frames)
