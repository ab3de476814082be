"""
Configuration for xlpolicy

Two layers:
- ``Settings``: process-level knobs from environment variables / ``.env``
  (log level, default output directory, benchmark repetitions).
- ``RunConfig``: the experiment document (YAML) describing model widths,
  the action vocabulary, training hyperparameters and the simulator.
"""
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from xlpolicy.errors import ConfigError

logger = logging.getLogger(__name__)

TaskName = Literal["pick", "place", "stack"]
TASKS: Tuple[str, ...] = ("pick", "place", "stack")


class Settings(BaseSettings):
    """Process settings loaded from environment variables"""

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Output
    output_dir: str = "runs"

    # Latency benchmark
    bench_warmup: int = 5
    bench_repeats: int = 30

    model_config = ConfigDict(
        env_file=".env",
        env_prefix="XLPOLICY_",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


# ============================================================================
# Run configuration sections
# ============================================================================

class _Section(BaseModel):
    """Unknown keys are rejected so typos fail loudly"""

    model_config = ConfigDict(extra="forbid", frozen=True)


class SimConfig(_Section):
    """Grid desk environment"""

    grid_size: int = Field(default=4, ge=2)
    heights: int = Field(default=3, ge=3)
    cell_size_m: float = Field(default=0.05, gt=0)
    image_size: int = Field(default=16, ge=2)
    lidar_beams: int = Field(default=32, ge=4)
    lidar_max_range_m: float = Field(default=0.3, gt=0)
    touch_size: int = Field(default=8, ge=2)
    touch_noise_std: float = Field(default=0.0, ge=0)
    max_steps: int = Field(default=50, ge=1)
    tasks: List[TaskName] = Field(default_factory=lambda: list(TASKS))

    @model_validator(mode="after")
    def _image_fits_grid(self):
        if self.image_size % self.grid_size:
            raise ValueError(f"image_size {self.image_size} is not a multiple of grid_size {self.grid_size}")
        if not self.tasks:
            raise ValueError("tasks must name at least one task")
        return self

    @property
    def cell_px(self) -> int:
        return self.image_size // self.grid_size


class FusionConfig(_Section):
    """Per-modality encoder shapes and output widths"""

    image_size: int = 16
    image_channels: int = 4
    lidar_beams: int = 32
    touch_size: int = 8
    conv_channels: Tuple[int, int] = (8, 16)
    conv_kernel: int = Field(default=2, ge=1)
    conv_stride: int = Field(default=2, ge=1)
    mlp_hidden: int = Field(default=32, ge=1)
    lidar_scale: float = Field(default=1.0 / 0.3, gt=0)
    d_rgbd: int = Field(default=32, ge=1)
    d_lidar: int = Field(default=16, ge=1)
    d_touch: int = Field(default=16, ge=1)

    @property
    def d_fused(self) -> int:
        return self.d_rgbd + self.d_lidar + self.d_touch


class XlConfig(_Section):
    """Transformer-XL encoder"""

    d_model: int = Field(default=64, ge=1)
    n_heads: int = Field(default=4, ge=1)
    n_layers: int = Field(default=2, ge=1)
    mem_len: int = Field(default=32, ge=0)
    window: Union[Literal["dense"], int] = "dense"
    ff_mult: int = Field(default=4, ge=1)
    max_segment_len: int = Field(default=512, ge=1)

    @model_validator(mode="after")
    def _heads_divide_width(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.window != "dense" and self.window < 1:
            raise ValueError(f"window must be >= 1 or 'dense', got {self.window}")
        return self

    @property
    def sparse(self) -> bool:
        return self.window != "dense"

    def fingerprint(self) -> Tuple[int, int, int]:
        """Identity of the memory layout this config produces"""
        return (self.d_model, self.n_layers, self.mem_len)


class PolicyConfig(_Section):
    """Q and value heads"""

    head_hidden: int = Field(default=64, ge=1)


class ActionsConfig(_Section):
    """
    Discrete action vocabulary.

    ``vocabulary`` left empty selects the built-in desk primitives scaled by
    ``step_m`` and ``yaw_step_deg``.
    """

    step_m: float = Field(default=0.05, gt=0)
    yaw_step_deg: float = Field(default=90.0, gt=0)
    vocabulary: Optional[List[List[float]]] = None

    @field_validator("vocabulary")
    @classmethod
    def _seven_components(cls, value):
        if value is not None:
            for i, entry in enumerate(value):
                if len(entry) != 7:
                    raise ValueError(f"vocabulary entry {i} has {len(entry)} components, expected 7")
        return value


class AugmentConfig(_Section):
    """Observation perturbations applied during behavior cloning"""

    enabled: bool = True
    translate: bool = True
    rotate: bool = True
    crop: bool = True
    touch_noise: bool = True
    flip: bool = False
    max_shift_px: int = Field(default=10, ge=0)
    max_rotation_deg: float = Field(default=15.0, ge=0)
    crop_min: float = Field(default=0.8, gt=0, le=1)
    touch_noise_std: float = Field(default=0.01, ge=0)
    augment_prob: float = Field(default=0.5, ge=0, le=1)
    flip_prob: float = Field(default=0.5, ge=0, le=1)


class TrainConfig(_Section):
    """
    Optimization hyperparameters shared by both phases.

    ``lr`` of 0 freezes the parameters (the optimizer is never stepped).
    """

    lr: float = Field(default=1e-3, ge=0)
    clip_eps: float = Field(default=0.2, gt=0, lt=1)
    gamma: float = Field(default=0.99, gt=0, le=1)
    lam: float = Field(default=0.95, ge=0, le=1)
    value_coef: float = Field(default=0.5, ge=0)
    batch_size: int = Field(default=32, ge=1)
    segment_len: int = Field(default=16, ge=1)
    bc_epochs: int = Field(default=20, ge=0)
    bc_steps: Optional[int] = Field(default=None, ge=0)
    scale_actions: bool = True
    critic_warm_start: bool = True
    ppo_iterations: int = Field(default=10, ge=0)
    epochs: int = Field(default=4, ge=1)
    rollout_steps: int = Field(default=256, ge=1)
    log_every: int = Field(default=10, ge=1)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)


class PathsConfig(_Section):
    output_dir: str = "runs"
    dataset: str = "episodes.jsonl"
    checkpoint: str = "model.ckpt"

    def resolve(self, name: str) -> Path:
        """Relative file names live under ``output_dir``"""
        path = Path(getattr(self, name))
        return path if path.is_absolute() else Path(self.output_dir) / path


class RunConfig(_Section):
    """Complete experiment description"""

    seed: int = Field(default=0, ge=0)
    sim: SimConfig = Field(default_factory=SimConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    xl: XlConfig = Field(default_factory=XlConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    actions: ActionsConfig = Field(default_factory=ActionsConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode="after")
    def _cross_section_consistency(self):
        checks = (
            ("image_size", self.fusion.image_size, self.sim.image_size),
            ("lidar_beams", self.fusion.lidar_beams, self.sim.lidar_beams),
            ("touch_size", self.fusion.touch_size, self.sim.touch_size),
        )
        for name, fused, rendered in checks:
            if fused != rendered:
                raise ValueError(f"fusion.{name}={fused} does not match sim.{name}={rendered}")
        if self.fusion.image_channels != 4:
            raise ValueError(f"fusion.image_channels must be 4 (RGB-D), got {self.fusion.image_channels}")
        if self.train.segment_len > self.xl.max_segment_len:
            raise ValueError(
                f"train.segment_len {self.train.segment_len} exceeds xl.max_segment_len {self.xl.max_segment_len}"
            )
        return self

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "RunConfig":
        """Copy with CLI overrides applied"""
        update = {}
        if seed is not None:
            update["seed"] = seed
        if output_dir is not None:
            update["paths"] = self.paths.model_copy(update={"output_dir": output_dir})
        return self.model_copy(update=update)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item.get("loc", ())) or "<root>"
        parts.append(f"{where}: {item.get('msg')}")
    return "; ".join(parts)


def parse_run_config(data: Optional[dict]) -> RunConfig:
    """
    Validate a plain mapping into a RunConfig.

    Raises:
        ConfigError: unknown keys, out-of-range values or inconsistent sections
    """
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError(f"invalid run config: {_format_validation_error(e)}") from e


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Load a YAML run config; ``None`` yields the defaults.

    Raises:
        ConfigError: unreadable file, malformed YAML or invalid content
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    config = parse_run_config(data)
    logger.info(f"Loaded run config from {path} (seed={config.seed})")
    return config


def yaw_step_rad(actions: ActionsConfig) -> float:
    return math.radians(actions.yaw_step_deg)
