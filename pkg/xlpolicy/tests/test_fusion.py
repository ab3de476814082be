"""
Unit Tests for multimodal fusion

Tests validate:
- Per-modality encoder widths and shape errors
- Fixed (rgbd, lidar, touch) concatenation order
- Missing modalities are rejected
- Gradients reach only the encoders whose slice is used
"""
import numpy as np
import pytest

from xlpolicy.errors import ContractError, ShapeError
from xlpolicy.fusion import FusionEncoder, Observation, fuse, validate_observation
from xlpolicy.numerics import make_rng


@pytest.fixture
def encoder(tiny_config) -> FusionEncoder:
    return FusionEncoder(tiny_config.fusion, make_rng(0, "fusion"))


@pytest.mark.unit
class TestEncodeModality:
    """Test single-modality encoders"""

    def test_output_widths_match_config(self, encoder, observation_factory, tiny_config):
        """Test every modality produces its configured width"""
        # Arrange
        obs = observation_factory(T=3)
        widths = {"rgbd": tiny_config.fusion.d_rgbd, "lidar": tiny_config.fusion.d_lidar,
                  "touch": tiny_config.fusion.d_touch}

        # Act & Assert
        for name, width in widths.items():
            assert encoder.encode_modality(name, getattr(obs, name)).shape == (3, width)
            assert encoder.encode_modality(name, getattr(obs, name)[0]).shape == (width,)

    def test_zero_image_through_zero_encoder_gives_bias(self, encoder, tiny_config):
        """Test zero propagation through zero-initialized weights"""
        # Arrange
        for _, p in encoder.rgbd.named_parameters():
            p.data[...] = 0.0
        encoder.rgbd.proj.bias.data[...] = np.arange(tiny_config.fusion.d_rgbd)

        # Act
        out = encoder.encode_modality("rgbd", np.zeros((8, 8, 4)))

        # Assert
        np.testing.assert_array_equal(out.data, np.arange(tiny_config.fusion.d_rgbd))

    def test_repeated_calls_are_bit_identical(self, encoder, observation_factory):
        """Test deterministic encoding"""
        # Arrange
        obs = observation_factory(T=2, seed=4)

        # Act
        first = encoder.encode_modality("lidar", obs.lidar).data
        second = encoder.encode_modality("lidar", obs.lidar).data

        # Assert
        np.testing.assert_array_equal(first, second)

    def test_wrong_shape_names_modality(self, encoder):
        """Test shape mismatch raises ShapeError naming the modality"""
        # Act & Assert
        with pytest.raises(ShapeError, match="touch"):
            encoder.encode_modality("touch", np.zeros(5))


@pytest.mark.unit
class TestFuse:
    """Test the composite feature vector"""

    def test_width_is_sum_of_encoder_widths(self, encoder, observation_factory):
        """Test d=(8,4,4) gives width 16"""
        # Act
        fused = fuse(observation_factory(T=1)[0], encoder)

        # Assert
        assert fused.shape == (16,)

    def test_slices_equal_modality_outputs(self, encoder, observation_factory):
        """Test F[0:8] etc. equal the single-modality encodings"""
        # Arrange
        obs = observation_factory(T=4)

        # Act
        fused = fuse(obs, encoder).data

        # Assert
        for name, part in encoder.output_slices().items():
            np.testing.assert_array_equal(fused[:, part], encoder.encode_modality(name, getattr(obs, name)).data)

    def test_perturbing_touch_changes_only_touch_slice(self, encoder, observation_factory):
        """Test perturbation locality over slices"""
        # Arrange
        obs = observation_factory(T=1)[0]
        perturbed = Observation(obs.rgbd, obs.lidar, obs.touch + 0.3)

        # Act
        diff = np.abs(fuse(perturbed, encoder).data - fuse(obs, encoder).data)

        # Assert
        assert np.all(diff[:12] == 0.0)
        assert np.any(diff[12:16] > 0.0)

    def test_missing_modality_raises(self, encoder, observation_factory):
        """Test fusion requires all three channels"""
        # Arrange
        obs = observation_factory(T=1)[0]

        # Act & Assert
        with pytest.raises(ContractError, match="lidar"):
            fuse(Observation(obs.rgbd, None, obs.touch), encoder)

    def test_gradient_reaches_only_used_encoder(self, encoder, observation_factory):
        """Test loss on the lidar slice only trains the lidar encoder"""
        # Arrange
        obs = observation_factory(T=2)
        part = encoder.output_slices()["lidar"]

        # Act
        (fuse(obs, encoder)[:, part] ** 2).sum().backward()

        # Assert
        assert all(p.grad is not None and np.any(p.grad != 0) for p in encoder.lidar.parameters())
        assert all(p.grad is None or np.all(p.grad == 0) for p in encoder.rgbd.parameters())
        assert all(p.grad is None or np.all(p.grad == 0) for p in encoder.touch.parameters())


@pytest.mark.unit
class TestValidateObservation:
    """Test observation invariants"""

    def test_rendered_range_accepted(self, observation_factory, tiny_config):
        """Test a valid frame passes"""
        # Act & Assert
        validate_observation(observation_factory(T=1)[0], tiny_config.sim.lidar_max_range_m)

    def test_rgbd_out_of_range_rejected(self, observation_factory):
        """Test rgbd above 1 is rejected"""
        # Arrange
        obs = observation_factory(T=1)[0]
        obs.rgbd[0, 0, 0] = 1.5

        # Act & Assert
        with pytest.raises(ContractError):
            validate_observation(obs, 0.3)

    def test_touch_out_of_range_rejected(self, observation_factory):
        """Test negative touch readings are rejected"""
        # Arrange
        obs = observation_factory(T=1)[0]
        obs.touch[0] = -0.01

        # Act & Assert
        with pytest.raises(ContractError, match="touch"):
            validate_observation(obs, 0.3)
