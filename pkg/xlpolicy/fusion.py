"""
Multimodal feature fusion

Each sensor stream goes through its own small encoder and the outputs are
concatenated in the fixed order (rgbd, lidar, touch):

    F = concat(conv(rgbd), mlp(lidar), mlp(touch))
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from xlpolicy.config import FusionConfig
from xlpolicy.errors import ContractError, ShapeError
from xlpolicy.numerics import Linear, Mlp, Module, Tensor, as_tensor, concat, conv2d, parameter
from xlpolicy.numerics.functional import conv_output_size
from xlpolicy.numerics.module import glorot

logger = logging.getLogger(__name__)

MODALITIES: Tuple[str, ...] = ("rgbd", "lidar", "touch")


@dataclass
class Observation:
    """
    One frame (or a time-stacked sequence of frames) of sensor data.

    Attributes:
        rgbd: (H, W, 4) or (T, H, W, 4), values in [0, 1]
        lidar: (B,) or (T, B), ranges in metres
        touch: (C,) or (T, C), normalized contact values
    """
    rgbd: Optional[np.ndarray]
    lidar: Optional[np.ndarray]
    touch: Optional[np.ndarray]

    def __len__(self) -> int:
        return self.rgbd.shape[0]

    def __getitem__(self, index) -> "Observation":
        return Observation(self.rgbd[index], self.lidar[index], self.touch[index])

    def missing(self) -> Tuple[str, ...]:
        return tuple(name for name in MODALITIES if getattr(self, name) is None)


def stack_observations(frames: Sequence[Observation]) -> Observation:
    """Stack single frames along a new leading time axis"""
    return Observation(
        rgbd=np.stack([f.rgbd for f in frames]),
        lidar=np.stack([f.lidar for f in frames]),
        touch=np.stack([f.touch for f in frames]),
    )


def validate_observation(obs: Observation, max_range: float) -> None:
    """
    Raises:
        ContractError: a channel is missing, non-finite or out of range
    """
    if obs.missing():
        raise ContractError(f"observation is missing modalities: {', '.join(obs.missing())}")
    for name in MODALITIES:
        if not np.all(np.isfinite(getattr(obs, name))):
            raise ContractError(f"{name} holds non-finite values")
    if obs.rgbd.min() < 0.0 or obs.rgbd.max() > 1.0:
        raise ContractError(f"rgbd values must lie in [0, 1], got [{obs.rgbd.min()}, {obs.rgbd.max()}]")
    if obs.lidar.min() < 0.0 or obs.lidar.max() > max_range:
        raise ContractError(f"lidar ranges must lie in [0, {max_range}]")
    if obs.touch.min() < 0.0 or obs.touch.max() > 1.0:
        raise ContractError(f"touch values must lie in [0, 1], got [{obs.touch.min()}, {obs.touch.max()}]")


class ConvEncoder(Module):
    """Two strided convolutions with tanh, flattened and projected"""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        k, s = cfg.conv_kernel, cfg.conv_stride
        c1, c2 = cfg.conv_channels
        size = cfg.image_size
        for _ in range(2):
            size = conv_output_size(size, k, s)
        if size < 1:
            raise ShapeError(f"conv stack (kernel {k}, stride {s}) does not fit image size {cfg.image_size}")
        self.kernel = k
        self.stride = s
        self.conv1_weight = parameter(glorot(rng, k * k * cfg.image_channels, c1))
        self.conv1_bias = parameter(np.zeros(c1))
        self.conv2_weight = parameter(glorot(rng, k * k * c1, c2))
        self.conv2_bias = parameter(np.zeros(c2))
        self.proj = Linear(size * size * c2, cfg.d_rgbd, rng)

    def __call__(self, images) -> Tensor:
        x = conv2d(images, self.conv1_weight, self.conv1_bias, self.kernel, self.stride).tanh()
        x = conv2d(x, self.conv2_weight, self.conv2_bias, self.kernel, self.stride).tanh()
        return self.proj(x.reshape(x.shape[0], -1))


class VectorEncoder(Module):
    """Scaled input through a 2-layer perceptron"""

    def __init__(self, width: int, hidden: int, out: int, rng: np.random.Generator, scale: float = 1.0):
        self.mlp = Mlp(width, hidden, out, rng)
        self.scale = scale

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if self.scale != 1.0:
            x = x * self.scale
        return self.mlp(x)


class FusionEncoder(Module):
    """Per-modality encoders plus the fixed-order concatenation"""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rgbd = ConvEncoder(cfg, rng)
        self.lidar = VectorEncoder(cfg.lidar_beams, cfg.mlp_hidden, cfg.d_lidar, rng, cfg.lidar_scale)
        self.touch = VectorEncoder(cfg.touch_size, cfg.mlp_hidden, cfg.d_touch, rng)

    @property
    def d_fused(self) -> int:
        return self.cfg.d_fused

    def input_shapes(self) -> Dict[str, Tuple[int, ...]]:
        cfg = self.cfg
        return {
            "rgbd": (cfg.image_size, cfg.image_size, cfg.image_channels),
            "lidar": (cfg.lidar_beams,),
            "touch": (cfg.touch_size,),
        }

    def output_slices(self) -> Dict[str, slice]:
        """Where each modality lands inside the fused vector"""
        a = self.cfg.d_rgbd
        b = a + self.cfg.d_lidar
        return {"rgbd": slice(0, a), "lidar": slice(a, b), "touch": slice(b, b + self.cfg.d_touch)}

    def encode_modality(self, modality: str, raw) -> Tensor:
        """
        Encode one modality; accepts a single frame or a leading time axis.

        Raises:
            ShapeError: ``raw`` does not end with the modality's declared shape
        """
        if modality not in MODALITIES:
            raise ContractError(f"unknown modality {modality!r}")
        expected = self.input_shapes()[modality]
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape[-len(expected):] != expected or raw.ndim not in (len(expected), len(expected) + 1):
            raise ShapeError(f"{modality} input has shape {raw.shape}, expected {expected} or (T, *{expected})")
        single = raw.ndim == len(expected)
        batch = raw[None] if single else raw
        out = getattr(self, modality)(batch)
        return out.reshape(-1) if single else out

    def __call__(self, obs: Observation) -> Tensor:
        return fuse(obs, self)


def fuse(obs: Observation, encoder: FusionEncoder) -> Tensor:
    """
    Composite feature vector F for a frame, or (T, d_fused) for a sequence.

    Raises:
        ContractError: any modality is missing
    """
    missing = obs.missing()
    if missing:
        raise ContractError(f"cannot fuse observation without {', '.join(missing)}")
    parts = [encoder.encode_modality(name, getattr(obs, name)) for name in MODALITIES]
    return concat(parts, axis=-1)
