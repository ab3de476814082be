"""
Pytest Configuration and Shared Fixtures

This module provides:
- Tiny run-config factory (small widths so full-stack tests run in seconds)
- Network factory
- Episode factory (scripted-expert demonstrations)
- Reusable observation helpers
"""
import os
from typing import Any, Dict, List

import numpy as np
import pytest
import yaml

from xlpolicy.config import RunConfig, parse_run_config
from xlpolicy.fusion import Observation
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.policy import ActionSpec
from xlpolicy.sim.dataset import Episode, generate_episodes


# ============================================================================
# Session-Level Fixtures
# ============================================================================

@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """Keep test runs quiet and deterministic"""
    os.environ["XLPOLICY_LOG_LEVEL"] = "WARNING"
    yield


# ============================================================================
# Config Factories
# ============================================================================

TINY_CONFIG: Dict[str, Any] = {
    "seed": 0,
    "sim": {"grid_size": 4, "heights": 3, "image_size": 8, "lidar_beams": 8, "touch_size": 4, "max_steps": 40},
    "fusion": {
        "image_size": 8,
        "lidar_beams": 8,
        "touch_size": 4,
        "conv_channels": [2, 4],
        "mlp_hidden": 8,
        "d_rgbd": 8,
        "d_lidar": 4,
        "d_touch": 4,
    },
    "xl": {"d_model": 8, "n_heads": 2, "n_layers": 1, "mem_len": 4, "max_segment_len": 64},
    "policy": {"head_hidden": 8},
    "train": {
        "segment_len": 4,
        "batch_size": 8,
        "bc_epochs": 1,
        "ppo_iterations": 1,
        "rollout_steps": 16,
        "epochs": 1,
        "log_every": 1000,
    },
}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@pytest.fixture
def run_config_factory():
    """Factory for tiny RunConfig instances; nested keyword dicts override sections"""
    def create(**overrides) -> RunConfig:
        return parse_run_config(_merge(TINY_CONFIG, overrides))
    return create


@pytest.fixture
def config_file_factory(tmp_path):
    """Factory writing a tiny run config YAML under tmp_path; returns its path"""
    def create(name: str = "config.yaml", **overrides) -> str:
        data = _merge(TINY_CONFIG, {"paths": {"output_dir": str(tmp_path / "run")}})
        path = tmp_path / name
        path.write_text(yaml.safe_dump(_merge(data, overrides)), encoding="utf-8")
        return str(path)
    return create


@pytest.fixture
def tiny_config(run_config_factory) -> RunConfig:
    return run_config_factory()


@pytest.fixture
def action_spec(tiny_config) -> ActionSpec:
    return ActionSpec.from_config(tiny_config.actions)


# ============================================================================
# Model and Data Factories
# ============================================================================

@pytest.fixture
def network_factory(tiny_config):
    """Factory for XlPolicyNetwork instances built from the tiny config"""
    def create(config: RunConfig = None, seed: int = 0) -> XlPolicyNetwork:
        config = config or tiny_config
        return XlPolicyNetwork(config, ActionSpec.from_config(config.actions), seed=seed)
    return create


@pytest.fixture
def episode_factory(tiny_config, action_spec):
    """Factory for scripted-expert episodes"""
    def create(n: int = 3, tasks=("pick", "place", "stack"), seed: int = 0, config: RunConfig = None) -> List[Episode]:
        config = config or tiny_config
        spec = ActionSpec.from_config(config.actions)
        return generate_episodes(n, list(tasks), seed, config.sim, spec)
    return create


@pytest.fixture
def observation_factory(tiny_config):
    """Factory for random (T, ...) observation sequences matching the tiny config"""
    def create(T: int = 5, seed: int = 0, config: RunConfig = None) -> Observation:
        config = config or tiny_config
        rng = np.random.default_rng(seed)
        sim = config.sim
        return Observation(
            rgbd=rng.uniform(0.0, 1.0, size=(T, sim.image_size, sim.image_size, 4)),
            lidar=rng.uniform(0.0, sim.lidar_max_range_m, size=(T, sim.lidar_beams)),
            touch=rng.uniform(0.0, 1.0, size=(T, sim.touch_size)),
        )
    return create
