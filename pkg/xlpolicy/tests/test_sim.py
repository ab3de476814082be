"""
Unit Tests for the desk environment and scripted expert

Tests validate:
- Deterministic resets and illegal-move handling
- Reward shaping and terminal handling
- Expert success, path length and return on every task
- Sensor value ranges
"""
import numpy as np
import pytest

from xlpolicy.errors import ContractError, ExpertError, StateError
from xlpolicy.sim import DeskEnv, expert_action, expert_index, render, reset, step
from xlpolicy.sim.expert import expert_path_length
from xlpolicy.sim.world import STEP_PENALTY, initial_state, transition


def entry(spec, name: str) -> np.ndarray:
    return spec.vocabulary[spec.names.index(name)]


def run_expert(task: str, seed: int, config, spec):
    state, _ = reset(task, seed, config.sim)
    start = state
    total = 0.0
    done = False
    while not done:
        state, _, reward, done = step(state, expert_action(state, spec), spec, config.sim)
        total += reward
    return start, state, total


def hold_object(task: str, seed: int, config, spec):
    """Run the expert until it has picked up object 0 (gripper right above the table)"""
    state, _ = reset(task, seed, config.sim)
    while state.held is None:
        state = transition(state, expert_action(state, spec))
    return state


# ============================================================================
# Tests: World dynamics
# ============================================================================

@pytest.mark.unit
class TestReset:
    """Test environment resets"""

    @pytest.mark.parametrize("task", ["pick", "place", "stack"])
    def test_same_seed_same_world(self, tiny_config, task):
        """Test reset(task, seed) is deterministic"""
        # Act
        state_a, obs_a = reset(task, 7, tiny_config.sim)
        state_b, obs_b = reset(task, 7, tiny_config.sim)

        # Assert
        assert state_a == state_b
        np.testing.assert_array_equal(obs_a.rgbd, obs_b.rgbd)
        np.testing.assert_array_equal(obs_a.lidar, obs_b.lidar)

    def test_layouts_vary_with_seed(self, tiny_config):
        """Test different seeds give different layouts"""
        # Act
        layouts = {initial_state("stack", seed, tiny_config.sim).objects for seed in range(20)}

        # Assert
        assert len(layouts) > 1

    def test_unknown_task(self, tiny_config):
        """Test unknown task names raise ContractError"""
        # Act & Assert
        with pytest.raises(ContractError):
            reset("juggle", 0, tiny_config.sim)

    def test_fresh_layout(self, tiny_config):
        """Test gripper at travel height, nothing held, objects on the table"""
        # Act
        state = initial_state("stack", 3, tiny_config.sim)

        # Assert
        assert state.gripper[2] == tiny_config.sim.heights
        assert state.held is None
        assert all(o.level == 0 for o in state.objects)
        assert state.objects[0].cell != state.objects[1].cell


@pytest.mark.unit
class TestStep:
    """Test single transitions"""

    def test_noop_changes_only_the_step_count(self, tiny_config, action_spec):
        """Test only the step counter moves and the step penalty applies"""
        # Arrange
        state, _ = reset("pick", 0, tiny_config.sim)

        # Act
        after, _, reward, done = step(state, entry(action_spec, "noop"), action_spec, tiny_config.sim)

        # Assert
        assert after.gripper == state.gripper
        assert after.objects == state.objects
        assert after.step_count == 1
        assert reward == STEP_PENALTY
        assert not done

    def test_wall_blocks_motion(self, tiny_config, action_spec):
        """Test moving past the table edge leaves the pose unchanged"""
        # Arrange
        state, _ = reset("pick", 0, tiny_config.sim)
        for _ in range(tiny_config.sim.grid_size):
            state = transition(state, entry(action_spec, "-x"))

        # Act
        after = transition(state, entry(action_spec, "-x"))

        # Assert
        assert state.gripper[0] == 0
        assert after.gripper == state.gripper

    def test_grasp_above_nothing_holds_nothing(self, tiny_config, action_spec):
        """Test grasping at travel height picks up nothing"""
        # Arrange
        state, _ = reset("pick", 0, tiny_config.sim)

        # Act
        after = transition(state, entry(action_spec, "grasp"))

        # Assert
        assert after.held is None

    def test_noop_while_holding_keeps_the_object(self, tiny_config, action_spec):
        """Test the no-op entry never releases a held object"""
        # Arrange
        holding = hold_object("place", 2, tiny_config, action_spec)

        # Act
        after = transition(holding, entry(action_spec, "noop"))

        # Assert
        assert holding.held == 0
        assert after.held == 0
        assert after.objects == holding.objects
        assert after.gripper == holding.gripper
        assert after.step_count == holding.step_count + 1

    def test_grasp_toggles_pick_up_and_release(self, tiny_config, action_spec):
        """Test the grasp entry releases when holding and picks up again when empty"""
        # Arrange
        holding = hold_object("place", 2, tiny_config, action_spec)

        # Act
        released = transition(holding, entry(action_spec, "grasp"))
        regrasped = transition(released, entry(action_spec, "grasp"))

        # Assert
        assert released.held is None
        assert regrasped.held == 0

    def test_yaw_turns_a_quarter(self, tiny_config, action_spec):
        """Test +yaw four times returns to the start heading"""
        # Arrange
        state, _ = reset("pick", 0, tiny_config.sim)

        # Act
        turned = transition(state, entry(action_spec, "+yaw"))
        for _ in range(3):
            turned = transition(turned, entry(action_spec, "+yaw"))

        # Assert
        assert transition(state, entry(action_spec, "+yaw")).yaw == 1
        assert turned.yaw == state.yaw

    def test_step_after_done_raises(self, tiny_config, action_spec):
        """Test stepping a finished episode raises StateError"""
        # Arrange
        _, final, _ = run_expert("pick", 0, tiny_config, action_spec)

        # Act & Assert
        with pytest.raises(StateError):
            step(final, entry(action_spec, "noop"), action_spec, tiny_config.sim)

    def test_timeout_ends_episode(self, run_config_factory, action_spec):
        """Test the episode is done after max_steps without success"""
        # Arrange
        config = run_config_factory(sim={"max_steps": 3})
        state, _ = reset("pick", 0, config.sim)

        # Act
        dones = []
        for _ in range(3):
            state, _, reward, done = step(state, entry(action_spec, "noop"), action_spec, config.sim)
            dones.append(done)

        # Assert
        assert dones == [False, False, True]
        assert not state.success

    def test_env_requires_reset(self, tiny_config, action_spec):
        """Test DeskEnv.step before reset raises StateError"""
        # Act & Assert
        with pytest.raises(StateError):
            DeskEnv(tiny_config.sim, action_spec).step(entry(action_spec, "noop"))


# ============================================================================
# Tests: Scripted expert
# ============================================================================

@pytest.mark.unit
class TestExpert:
    """Test the scripted expert"""

    @pytest.mark.parametrize("task", ["pick", "place", "stack"])
    def test_expert_solves_every_seed(self, tiny_config, action_spec, task):
        """Test success, path length and return over many seeds"""
        for seed in range(30):
            # Act
            start, final, total = run_expert(task, seed, tiny_config, action_spec)

            # Assert
            assert final.success, f"{task} seed={seed}"
            assert final.step_count == expert_path_length(start)
            assert total == pytest.approx(1.0 + STEP_PENALTY * final.step_count)

    def test_expert_uses_vocabulary_entries(self, tiny_config, action_spec):
        """Test expert actions are verbatim vocabulary rows"""
        # Arrange
        state, _ = reset("place", 1, tiny_config.sim)

        # Act
        index = expert_index(state, action_spec)

        # Assert
        np.testing.assert_array_equal(expert_action(state, action_spec), action_spec.vocabulary[index])

    def test_completed_task_raises(self, tiny_config, action_spec):
        """Test asking the expert after success raises ExpertError"""
        # Arrange
        _, final, _ = run_expert("stack", 2, tiny_config, action_spec)

        # Act & Assert
        with pytest.raises(ExpertError):
            expert_index(final, action_spec)


# ============================================================================
# Tests: Sensors
# ============================================================================

@pytest.mark.unit
class TestRender:
    """Test rendered observation ranges"""

    def test_value_ranges(self, tiny_config, action_spec):
        """Test rgbd in [0, 1], lidar in [0, max_range], touch in [0, 1]"""
        # Arrange
        state, _ = reset("stack", 4, tiny_config.sim)
        sim = tiny_config.sim

        while not state.done:
            # Act
            obs = render(state, sim)

            # Assert
            assert obs.rgbd.shape == (sim.image_size, sim.image_size, 4)
            assert 0.0 <= obs.rgbd.min() and obs.rgbd.max() <= 1.0
            assert 0.0 <= obs.lidar.min() and obs.lidar.max() <= sim.lidar_max_range_m
            assert 0.0 <= obs.touch.min() and obs.touch.max() <= 1.0
            state, _, _, _ = step(state, expert_action(state, action_spec), action_spec, sim)

    def test_touch_reads_grasp(self, tiny_config, action_spec):
        """Test finger pads read 1 once the object is held"""
        # Arrange
        state, _ = reset("pick", 5, tiny_config.sim)
        while state.held is None:
            state, _, _, _ = step(state, expert_action(state, action_spec), action_spec, tiny_config.sim)

        # Act
        touch = render(state, tiny_config.sim).touch

        # Assert
        assert np.all(touch[: tiny_config.sim.touch_size // 2] == 1.0)
        assert np.all(render(initial_state("pick", 5, tiny_config.sim), tiny_config.sim).touch == 0.0)
