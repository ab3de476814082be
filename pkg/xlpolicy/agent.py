"""
Step-by-step acting with the same segmentation as training

Training encodes episodes in fixed segments of ``segment_len`` with memory
carried between them. The agent reproduces that exactly online: it buffers
the observations of the current (partial) segment, re-encodes the buffer at
every step and commits the memory once the segment fills up. The output for
step t therefore matches row t of ``forward_episode`` on the full episode
(up to float rounding from the different matrix shapes).
"""
import logging
from typing import List, Tuple

import numpy as np

from xlpolicy.fusion import Observation, stack_observations, validate_observation
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.numerics import log_softmax, no_grad
from xlpolicy.policy import PolicyOutput, policy_output
from xlpolicy.xl_encoder import XlMemory

logger = logging.getLogger(__name__)


class StreamingAgent:
    """Greedy (or sampling) policy over one observation stream"""

    def __init__(self, model: XlPolicyNetwork, segment_len: int):
        self.model = model
        self.segment_len = segment_len
        self.memory: XlMemory = model.initial_memory()
        self.buffer: List[Observation] = []

    def reset(self) -> None:
        self.memory = self.model.initial_memory()
        self.buffer = []

    def observe(self, obs: Observation) -> PolicyOutput:
        """
        Add a frame and return the policy for it.

        Raises:
            ContractError: the frame is missing a modality or out of range
        """
        validate_observation(obs, self.model.config.sim.lidar_max_range_m)
        self.buffer.append(obs)
        with no_grad():
            out, memory = self.model.forward(stack_observations(self.buffer), self.memory)
        if len(self.buffer) == self.segment_len:
            self.memory = memory
            self.buffer = []
        return policy_output(out.q.data[-1], float(out.value.data[-1]), self.model.spec)

    def act(self, obs: Observation, state=None) -> int:
        return self.observe(obs).action_index

    def sample(self, obs: Observation, rng: np.random.Generator) -> Tuple[int, float, float]:
        """
        Draw an action from the softmax policy.

        Returns:
            (action index, log-probability, value estimate)
        """
        output = self.observe(obs)
        log_pi = log_softmax(output.q).data
        index = int(rng.choice(len(log_pi), p=np.exp(log_pi) / np.exp(log_pi).sum()))
        return index, float(log_pi[index]), output.value
