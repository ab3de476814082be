"""
Action vocabulary and the Q / policy / value heads

Q-values come from a 2-layer head over the encoded state, the policy is
their softmax, and the greedy action is the argmax with ties broken toward
the lowest index. Each discrete action decodes to a 7-vector
(dx, dy, dz, droll, dpitch, dyaw, grasp). A motionless entry with the grasp
bit set toggles the gripper; the all-zero entry is a no-op.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from xlpolicy.config import ActionsConfig, yaw_step_rad
from xlpolicy.errors import ConfigError, ContractError, ShapeError
from xlpolicy.numerics import Mlp, Tensor, as_tensor, matmul, softmax

logger = logging.getLogger(__name__)

ACTION_DIM = 7
GRASP = 6

DEFAULT_ACTION_NAMES: Tuple[str, ...] = (
    "+x", "-x", "+y", "-y", "+z", "-z", "+yaw", "-yaw", "grasp", "noop", "+x+y", "-x-y",
)


def _default_vocabulary(step: float, yaw: float) -> np.ndarray:
    rows = [
        (step, 0, 0, 0, 0, 0, 0),
        (-step, 0, 0, 0, 0, 0, 0),
        (0, step, 0, 0, 0, 0, 0),
        (0, -step, 0, 0, 0, 0, 0),
        (0, 0, step, 0, 0, 0, 0),
        (0, 0, -step, 0, 0, 0, 0),
        (0, 0, 0, 0, 0, yaw, 0),
        (0, 0, 0, 0, 0, -yaw, 0),
        (0, 0, 0, 0, 0, 0, 1),
        (0, 0, 0, 0, 0, 0, 0),
        (step, step, 0, 0, 0, 0, 0),
        (-step, -step, 0, 0, 0, 0, 0),
    ]
    return np.asarray(rows, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ActionSpec:
    """
    K distinct 7-vectors; entry order defines the action index.

    Attributes:
        vocabulary: (K, 7) array, grasp component in {0, 1}
        names: optional human-readable labels
    """
    vocabulary: np.ndarray
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        vocab = np.asarray(self.vocabulary, dtype=np.float64)
        vocab.setflags(write=False)
        object.__setattr__(self, "vocabulary", vocab)
        if vocab.ndim != 2 or vocab.shape[1] != ACTION_DIM:
            raise ConfigError(f"vocabulary must be (K, {ACTION_DIM}), got {vocab.shape}")
        if vocab.shape[0] < 2:
            raise ConfigError(f"vocabulary needs at least 2 entries, got {vocab.shape[0]}")
        if not np.all(np.isfinite(vocab)):
            raise ConfigError("vocabulary holds non-finite values")
        if not np.all(np.isin(vocab[:, GRASP], (0.0, 1.0))):
            raise ConfigError("grasp component must be 0 or 1 for every entry")
        if len(np.unique(vocab, axis=0)) != vocab.shape[0]:
            raise ConfigError("vocabulary entries must be distinct")
        if self.names and len(self.names) != vocab.shape[0]:
            raise ConfigError(f"{len(self.names)} names given for {vocab.shape[0]} entries")

    @classmethod
    def from_config(cls, cfg: ActionsConfig) -> "ActionSpec":
        if cfg.vocabulary is not None:
            return cls(np.asarray(cfg.vocabulary, dtype=np.float64))
        vocab = _default_vocabulary(cfg.step_m, yaw_step_rad(cfg))
        return cls(vocab, DEFAULT_ACTION_NAMES)

    @property
    def size(self) -> int:
        return self.vocabulary.shape[0]

    def scales(self) -> np.ndarray:
        """Largest magnitude per component (1 where a component is always 0)"""
        peak = np.abs(self.vocabulary).max(axis=0)
        return np.where(peak > 0, peak, 1.0)

    def nearest(self, action) -> int:
        """Index of the closest entry after per-component scaling (lowest index on ties)"""
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (ACTION_DIM,):
            raise ShapeError(f"action must be a {ACTION_DIM}-vector, got shape {action.shape}")
        scale = self.scales()
        distance = (((self.vocabulary - action) / scale) ** 2).sum(axis=1)
        return int(np.argmin(distance))

    def digest(self) -> str:
        """Stable identifier for checking datasets and checkpoints agree"""
        return hashlib.sha256(self.vocabulary.astype("<f8").tobytes()).hexdigest()[:16]

    def to_list(self) -> List[List[float]]:
        return self.vocabulary.tolist()


@dataclass
class PolicyOutput:
    q: np.ndarray
    pi: np.ndarray
    value: float
    action_index: int
    action_vec: np.ndarray


# ============================================================================
# Head operations
# ============================================================================

def q_values(h_t, head: Mlp) -> Tensor:
    """
    Action logits Q(a, s_t) for one state (d_model,) or a sequence (T, d_model).

    Raises:
        ShapeError: hidden width does not match the head
    """
    return head(as_tensor(h_t))


def policy_from_q(q) -> Tensor:
    """
    Softmax policy over the last axis.

    Raises:
        ContractError: fewer than 2 actions or non-finite logits
    """
    q = as_tensor(q)
    if q.shape[-1] < 2:
        raise ContractError(f"policy needs at least 2 actions, got {q.shape[-1]}")
    if not q.is_finite():
        raise ContractError("Q-values hold non-finite entries")
    return softmax(q, axis=-1)


def select_action(q) -> int:
    """Greedy action; ties go to the lowest index"""
    q = np.asarray(q.data if isinstance(q, Tensor) else q, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] < 2:
        raise ContractError(f"select_action needs a 1-D vector of at least 2 Q-values, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ContractError("Q-values hold non-finite entries")
    return int(np.argmax(q))


def decode_action(index: int, spec: ActionSpec) -> np.ndarray:
    """
    Raises:
        IndexError: index outside [0, K)
    """
    if not 0 <= int(index) < spec.size:
        raise IndexError(f"action index {index} outside [0, {spec.size})")
    return spec.vocabulary[int(index)].copy()


def expected_action(pi, spec: ActionSpec, atol: float = 1e-9) -> Tensor:
    """
    Probability-weighted mean of the vocabulary, sum_a pi(a) * decode(a).

    Works on one distribution (K,) or a batch (N, K).

    Raises:
        ContractError: ``pi`` is not a probability vector over the vocabulary
    """
    pi = as_tensor(pi)
    if pi.shape[-1] != spec.size:
        raise ContractError(f"policy has {pi.shape[-1]} entries, vocabulary has {spec.size}")
    if np.any(pi.data < -atol) or np.any(np.abs(pi.data.sum(axis=-1) - 1.0) > atol):
        raise ContractError("policy is not a probability distribution")
    if pi.ndim == 1:
        return matmul(pi.reshape(1, -1), Tensor(spec.vocabulary)).reshape(-1)
    return matmul(pi, Tensor(spec.vocabulary))


def state_value(h_t, head: Mlp) -> Tensor:
    """Critic V(s_t): scalar for one state, (T,) for a sequence"""
    out = head(as_tensor(h_t))
    return out.reshape(()) if out.ndim == 1 else out.reshape(-1)


def policy_output(q: np.ndarray, value: float, spec: ActionSpec) -> PolicyOutput:
    pi = policy_from_q(q).data
    index = select_action(q)
    return PolicyOutput(q=np.asarray(q), pi=pi, value=float(value), action_index=index,
                        action_vec=decode_action(index, spec))


def nearest_indices(actions: Sequence[np.ndarray], spec: ActionSpec) -> np.ndarray:
    return np.asarray([spec.nearest(a) for a in actions], dtype=np.int64)


def validate_vocabulary(spec: ActionSpec, digest: Optional[str]) -> None:
    """
    Raises:
        ConfigError: ``digest`` names a different vocabulary
    """
    if digest is not None and digest != spec.digest():
        raise ConfigError(f"vocabulary mismatch: data uses {digest}, config uses {spec.digest()}")
