"""
Pydantic models for on-disk records and reports
"""
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


# ============================================================================
# Arrays
# ============================================================================

class ArrayPayload(BaseModel):
    """Numeric array as a declared shape plus flat row-major values"""
    shape: List[int]
    data: List[float]

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ArrayPayload":
        array = np.asarray(array, dtype=np.float64)
        return cls(shape=list(array.shape), data=array.reshape(-1).tolist())

    def to_array(self) -> np.ndarray:
        values = np.asarray(self.data, dtype=np.float64)
        expected = int(np.prod(self.shape)) if self.shape else 1
        if values.size != expected:
            raise ValueError(f"array declares shape {self.shape} but holds {values.size} values")
        return values.reshape(self.shape)


# ============================================================================
# Episodes
# ============================================================================

class EpisodeMeta(BaseModel):
    """Provenance of one demonstration"""
    seed: int
    task: Literal["pick", "place", "stack"]
    success: bool
    length: int
    vocab_digest: str


class EpisodeRecord(BaseModel):
    """One line of an episode file (field order is fixed)"""
    model_config = ConfigDict(extra="forbid")

    meta: EpisodeMeta
    rgbd: ArrayPayload
    lidar: ArrayPayload
    touch: ArrayPayload
    actions: ArrayPayload
    action_indices: List[int]
    rewards: List[float]
    dones: List[bool]


# ============================================================================
# Training metrics
# ============================================================================

class MetricRow(BaseModel):
    """Per-batch training metrics (one CSV line)"""
    model_config = ConfigDict(populate_by_name=True)

    phase: Literal["bc", "ppo"]
    batch: int = Field(ge=0)
    actor_loss: float
    critic_loss: float
    episode_return: Optional[float] = Field(default=None, alias="return")
    mse: Optional[float] = None
    aux: Dict[str, float] = Field(default_factory=dict)


# ============================================================================
# Checkpoints
# ============================================================================

class TensorEntry(BaseModel):
    """Location of one parameter inside the checkpoint payload"""
    name: str
    shape: List[int]
    offset: int = Field(ge=0)  # in float64 elements


class CheckpointHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: str = "XLPOLICY-CKPT"
    version: int = 1
    dtype: Literal["<f8"] = "<f8"
    tensors: List[TensorEntry]
    vocabulary: List[List[float]]
    vocab_digest: str
    config: dict


# ============================================================================
# Evaluation and benchmark reports
# ============================================================================

class TaskReport(BaseModel):
    episodes: int
    success_rate: float
    accuracy: float
    mean_return: float


class EvalReport(BaseModel):
    """Greedy-policy evaluation summary"""
    episodes: int
    success_rate: float
    accuracy: float
    mean_return: float
    per_task: Dict[str, TaskReport]
    seed: int


class BenchRow(BaseModel):
    mode: Literal["dense", "sparse", "lstm", "cnn"]
    seq_len: int
    mean_s: float
    p95_s: float

    def as_csv_fields(self) -> Tuple[str, str, str, str]:
        return (self.mode, str(self.seq_len), f"{self.mean_s:.9g}", f"{self.p95_s:.9g}")
