"""
Desk-scale Acceptance Tests (slow)

Tests validate, for three seeds at the configs/desk.yaml scale:
- Behavior cloning on 200 expert episodes solves pick and stack
- PPO fine-tuning keeps success and raises the episode return
- Windowed actor and critic losses end below where they started
- The eval command reproduces the pick success rate end to end
"""
import json
from pathlib import Path
from typing import Dict, List

import numpy as np
import pytest
import yaml

from xlpolicy.agent import StreamingAgent
from xlpolicy.config import RunConfig, load_run_config
from xlpolicy.evaluation import evaluate
from xlpolicy.learn import train_bc, train_ppo
from xlpolicy.learn.metrics import windowed_mean
from xlpolicy.main import EXIT_OK, main
from xlpolicy.models import MetricRow
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.policy import ActionSpec
from xlpolicy.sim.dataset import generate_episodes
from xlpolicy.sim.world import DeskEnv

DESK_CONFIG = Path(__file__).resolve().parents[2] / "configs" / "desk.yaml"

SEEDS = (0, 1, 2)
TRAIN_EPISODES = 200
EVAL_EPISODES = 100
EVAL_SEED_OFFSET = 10_000
LOSS_WINDOW = 20


def greedy_report(model: XlPolicyNetwork, config: RunConfig, seed: int, tasks=None):
    agent = StreamingAgent(model, config.train.segment_len)
    return evaluate(agent, config, model.spec, EVAL_EPISODES, seed=EVAL_SEED_OFFSET + seed, tasks=tasks)


def iteration_returns(rows: List[MetricRow]) -> List[float]:
    by_iteration: Dict[int, float] = {}
    for row in rows:
        by_iteration[int(row.aux["iteration"])] = row.episode_return
    return [by_iteration[i] for i in sorted(by_iteration)]


@pytest.fixture(scope="module")
def desk_runs():
    """BC then PPO for each seed, with greedy reports taken after each phase"""
    base = load_run_config(DESK_CONFIG)
    spec = ActionSpec.from_config(base.actions)
    runs = {}
    for seed in SEEDS:
        config = base.with_overrides(seed=seed)
        episodes = generate_episodes(TRAIN_EPISODES, list(config.sim.tasks), seed, config.sim, spec)
        model = XlPolicyNetwork(config, spec, seed=seed)

        model, bc_rows = train_bc(episodes, model, config.train, seed=seed)
        bc_pick = greedy_report(model, config, seed, tasks=["pick"])
        bc_stack = greedy_report(model, config, seed, tasks=["stack"])
        bc_all = greedy_report(model, config, seed)

        model, ppo_rows = train_ppo(DeskEnv(config.sim, spec), model, config.train, seed=seed)
        ppo_all = greedy_report(model, config, seed)

        runs[seed] = {
            "bc_rows": bc_rows,
            "ppo_rows": ppo_rows,
            "bc_pick": bc_pick,
            "bc_stack": bc_stack,
            "bc_all": bc_all,
            "ppo_all": ppo_all,
        }
    return runs


# ============================================================================
# Tests: Behavior cloning success
# ============================================================================

@pytest.mark.slow
@pytest.mark.acceptance
class TestBehaviorCloningSuccess:
    """Test greedy success after behavior cloning, median over seeds"""

    def test_pick_success_at_least_90_percent(self, desk_runs):
        """Test median pick success over 100 episodes is >= 0.9"""
        # Act
        rates = [desk_runs[s]["bc_pick"].success_rate for s in SEEDS]

        # Assert
        assert all(desk_runs[s]["bc_pick"].episodes == EVAL_EPISODES for s in SEEDS)
        assert np.median(rates) >= 0.9, rates

    def test_stack_success_at_least_80_percent(self, desk_runs):
        """Test median stack success over 100 episodes is >= 0.8"""
        # Act
        rates = [desk_runs[s]["bc_stack"].success_rate for s in SEEDS]

        # Assert
        assert np.median(rates) >= 0.8, rates


# ============================================================================
# Tests: PPO fine-tuning
# ============================================================================

@pytest.mark.slow
@pytest.mark.acceptance
class TestFineTuning:
    """Test PPO after behavior cloning"""

    def test_success_drops_at_most_five_points(self, desk_runs):
        """Test median greedy success after PPO is within 0.05 of the BC median"""
        # Arrange
        before = np.median([desk_runs[s]["bc_all"].success_rate for s in SEEDS])

        # Act
        after = np.median([desk_runs[s]["ppo_all"].success_rate for s in SEEDS])

        # Assert
        assert after >= before - 0.05, (before, after)

    def test_mean_return_improves(self, desk_runs):
        """Test the median rollout return of the last iteration beats the first"""
        # Act
        returns = [iteration_returns(desk_runs[s]["ppo_rows"]) for s in SEEDS]

        # Assert
        assert all(len(r) >= 2 for r in returns)
        first = np.median([r[0] for r in returns])
        last = np.median([r[-1] for r in returns])
        assert last > first, (first, last)


# ============================================================================
# Tests: Loss curves
# ============================================================================

@pytest.mark.slow
@pytest.mark.acceptance
class TestLossTrend:
    """Test windowed losses fall over behavior cloning for every seed"""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_actor_loss_window_falls(self, desk_runs, seed):
        """Test the last width-20 actor-loss window is below the first"""
        # Arrange
        rows = desk_runs[seed]["bc_rows"]

        # Act
        windows = windowed_mean([r.actor_loss for r in rows], width=LOSS_WINDOW)

        # Assert
        assert len(windows) >= 2
        assert windows[-1] < windows[0]

    @pytest.mark.parametrize("seed", SEEDS)
    def test_critic_loss_window_falls(self, desk_runs, seed):
        """Test the last width-20 critic-loss window is below the first"""
        # Arrange
        rows = desk_runs[seed]["bc_rows"]

        # Act
        windows = windowed_mean([r.critic_loss for r in rows], width=LOSS_WINDOW)

        # Assert
        assert windows[-1] < windows[0]


# ============================================================================
# Tests: Command-line pipeline
# ============================================================================

@pytest.mark.slow
@pytest.mark.acceptance
class TestEvalCommand:
    """Test gen-data, train-bc and eval chained through the CLI"""

    def test_pick_pipeline_reaches_90_percent(self, tmp_path):
        """Test eval.json reports >= 0.9 pick success over 100 episodes"""
        # Arrange
        data = yaml.safe_load(DESK_CONFIG.read_text(encoding="utf-8"))
        data["sim"]["tasks"] = ["pick"]
        data["paths"]["output_dir"] = str(tmp_path / "run")
        config_path = tmp_path / "desk_pick.yaml"
        config_path.write_text(yaml.safe_dump(data), encoding="utf-8")
        config = str(config_path)
        checkpoint = str(tmp_path / "run" / "model.ckpt")

        # Act
        assert main(["gen-data", "--config", config, "--episodes", str(TRAIN_EPISODES)]) == EXIT_OK
        assert main(["train-bc", "--config", config]) == EXIT_OK
        code = main(["eval", "--config", config, "--in", checkpoint, "--episodes", str(EVAL_EPISODES)])

        # Assert
        assert code == EXIT_OK
        report = json.loads((tmp_path / "run" / "eval.json").read_text(encoding="utf-8"))
        assert report["episodes"] == EVAL_EPISODES
        assert report["per_task"]["pick"]["success_rate"] >= 0.9
