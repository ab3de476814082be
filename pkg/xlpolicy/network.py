"""
Full actor-critic network: fusion -> XL encoder -> Q head / value head
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from xlpolicy.config import RunConfig
from xlpolicy.fusion import FusionEncoder, Observation, fuse
from xlpolicy.numerics import Mlp, Module, Tensor, concat, make_rng
from xlpolicy.policy import ActionSpec, q_values, state_value
from xlpolicy.xl_encoder import XlEncoder, XlMemory

logger = logging.getLogger(__name__)


@dataclass
class SegmentOutput:
    q: Tensor        # (T, K)
    value: Tensor    # (T,)
    hidden: Tensor   # (T, d_model)


class XlPolicyNetwork(Module):
    """Actor-critic over observation streams"""

    def __init__(self, config: RunConfig, spec: ActionSpec, seed: Optional[int] = None):
        seed = config.seed if seed is None else seed
        self.config = config
        self.spec = spec
        self.fusion = FusionEncoder(config.fusion, make_rng(seed, "init", "fusion"))
        self.encoder = XlEncoder(config.xl, config.fusion.d_fused, make_rng(seed, "init", "xl"))
        heads_rng = make_rng(seed, "init", "heads")
        self.q_head = Mlp(config.xl.d_model, config.policy.head_hidden, spec.size, heads_rng)
        self.value_head = Mlp(config.xl.d_model, config.policy.head_hidden, 1, heads_rng)
        logger.debug(f"Built network with {self.num_parameters()} parameters, K={spec.size}")

    def initial_memory(self) -> XlMemory:
        return self.encoder.initial_memory()

    def forward(self, obs: Observation, memory: XlMemory) -> Tuple[SegmentOutput, XlMemory]:
        """One segment of time-stacked observations"""
        hidden, memory = self.encoder.encode_segment(fuse(obs, self.fusion), memory)
        return SegmentOutput(q_values(hidden, self.q_head), state_value(hidden, self.value_head), hidden), memory

    __call__ = forward

    def forward_episode(
        self,
        obs: Observation,
        segment_len: int,
        memory: Optional[XlMemory] = None,
    ) -> Tuple[SegmentOutput, XlMemory]:
        """
        Run a whole stream as consecutive segments, carrying memory between
        them; outputs are concatenated back to (T, ...).
        """
        memory = self.initial_memory() if memory is None else memory
        parts = []
        for start in range(0, len(obs), segment_len):
            out, memory = self.forward(obs[start:start + segment_len], memory)
            parts.append(out)
        if len(parts) == 1:
            return parts[0], memory
        return SegmentOutput(
            q=concat([p.q for p in parts], axis=0),
            value=concat([p.value for p in parts], axis=0),
            hidden=concat([p.hidden for p in parts], axis=0),
        ), memory
