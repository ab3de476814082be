"""
Unit Tests for the numerics kernel

Tests validate:
- Forward values of matmul, softmax, layer_norm
- Reverse-mode gradients against central finite differences
- backward() contracts (scalar loss, no silent accumulation)
- Adam update arithmetic and rejection of non-finite gradients
- Module parameter walking and state snapshots
"""
import numpy as np
import pytest

from xlpolicy.errors import ContractError, NonFiniteGradientError, ShapeError, StateError
from xlpolicy.numerics import (
    Adam,
    AdamState,
    LayerNorm,
    Linear,
    Mlp,
    Tensor,
    adam_step,
    concat,
    conv2d,
    layer_norm,
    log_softmax,
    make_rng,
    masked_fill,
    matmul,
    minimum,
    no_grad,
    parameter,
    softmax,
    where,
)
from xlpolicy.numerics.gradcheck import check_gradients, max_relative_error


# ============================================================================
# Tests: Forward operations
# ============================================================================

@pytest.mark.unit
class TestMatmul:
    """Test matrix products"""

    def test_matmul_known_product(self):
        """Test the 2x2 hand-computed product"""
        # Arrange
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])

        # Act
        out = matmul(a, b)

        # Assert
        np.testing.assert_array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])

    def test_matmul_identity_and_zero_exact(self):
        """Test identity and zero matrices behave exactly"""
        # Arrange
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])

        # Act & Assert
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), a).data, a.data)
        np.testing.assert_array_equal(matmul(a, Tensor(np.zeros((2, 2)))).data, np.zeros((2, 2)))

    def test_matmul_shape_mismatch_names_shapes(self):
        """Test inner-dimension mismatch raises ShapeError naming both shapes"""
        # Arrange
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((2, 3)))

        # Act & Assert
        with pytest.raises(ShapeError, match=r"\(2, 3\) @ \(2, 3\)"):
            matmul(a, b)


@pytest.mark.unit
class TestSoftmax:
    """Test softmax and log_softmax"""

    def test_softmax_known_values(self):
        """Test softmax(1, 2, 3) against high-precision values"""
        # Act
        out = softmax(Tensor([1.0, 2.0, 3.0]))

        # Assert
        np.testing.assert_allclose(out.data, [0.09003057, 0.24472847, 0.66524096], atol=1e-8)

    def test_softmax_uniform_for_constant_input(self):
        """Test zeros map to the uniform distribution"""
        # Act
        out = softmax(Tensor(np.zeros(3)))

        # Assert
        np.testing.assert_allclose(out.data, np.full(3, 1.0 / 3.0), atol=1e-15)

    def test_softmax_rows_sum_to_one_and_shift_invariant(self):
        """Test normalization and shift invariance on random rows"""
        # Arrange
        rng = np.random.default_rng(0)
        x = rng.normal(0.0, 5.0, size=(200, 7))

        # Act
        p = softmax(Tensor(x)).data
        shifted = softmax(Tensor(x + 123.0)).data

        # Assert
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(p, shifted, atol=1e-12)
        assert np.all(p >= 0.0)

    def test_softmax_large_logits_stay_finite(self):
        """Test max-subtraction keeps extreme logits finite"""
        # Act
        out = softmax(Tensor([1000.0, 1001.0]))

        # Assert
        assert np.all(np.isfinite(out.data))

    def test_softmax_empty_axis_raises(self):
        """Test empty reduction axis raises ShapeError"""
        # Act & Assert
        with pytest.raises(ShapeError):
            softmax(Tensor(np.zeros((2, 0))))

    def test_log_softmax_matches_log_of_softmax(self):
        """Test log_softmax agrees with log(softmax)"""
        # Arrange
        x = Tensor(np.random.default_rng(1).normal(size=(4, 5)))

        # Act & Assert
        np.testing.assert_allclose(log_softmax(x).data, np.log(softmax(x).data), atol=1e-12)


@pytest.mark.unit
class TestLayerNorm:
    """Test layer normalization"""

    def test_constant_row_maps_to_zeros(self):
        """Test a zero-variance row maps to zeros"""
        # Act
        out = layer_norm(Tensor([5.0, 5.0, 5.0, 5.0]), Tensor(np.ones(4)), Tensor(np.zeros(4)))

        # Assert
        np.testing.assert_allclose(out.data, np.zeros(4), atol=1e-12)

    def test_two_values_normalize_to_minus_one_one(self):
        """Test (1, 3) maps to (-1, 1) up to the eps correction"""
        # Act
        out = layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)

        # Assert
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-9)

    def test_zero_gain_returns_bias(self):
        """Test gain=0 leaves only the bias"""
        # Arrange
        bias = np.array([0.5, -1.0, 2.0])

        # Act
        out = layer_norm(Tensor(np.random.default_rng(0).normal(size=(4, 3))), Tensor(np.zeros(3)), Tensor(bias))

        # Assert
        np.testing.assert_array_equal(out.data, np.tile(bias, (4, 1)))

    def test_rows_have_zero_mean_unit_variance(self):
        """Test per-row statistics before the affine part"""
        # Arrange
        x = np.random.default_rng(2).normal(3.0, 2.0, size=(10, 16))

        # Act
        out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12).data

        # Assert
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-9)

    def test_single_feature_raises(self):
        """Test d < 2 raises ShapeError"""
        # Act & Assert
        with pytest.raises(ShapeError):
            layer_norm(Tensor([1.0]), Tensor(np.ones(1)), Tensor(np.zeros(1)))


# ============================================================================
# Tests: Gradients
# ============================================================================

@pytest.mark.unit
class TestBackward:
    """Test reverse-mode gradient contracts"""

    def test_square_gradient(self):
        """Test d(x^2)/dx = 6 at x = 3"""
        # Arrange
        x = parameter(3.0)

        # Act
        (x * x).backward()

        # Assert
        assert x.grad == pytest.approx(6.0)

    def test_sum_of_softmax_has_zero_gradient(self):
        """Test a constant-1 function has zero gradient"""
        # Arrange
        x = parameter([0.3, -1.2, 2.0])

        # Act
        softmax(x).sum().backward()

        # Assert
        np.testing.assert_allclose(x.grad, np.zeros(3), atol=1e-15)

    def test_non_scalar_loss_raises(self):
        """Test backward on a vector raises ContractError"""
        # Arrange
        x = parameter([1.0, 2.0])

        # Act & Assert
        with pytest.raises(ContractError):
            (x * 2.0).backward()

    def test_second_backward_without_reset_raises(self):
        """Test gradients never accumulate silently"""
        # Arrange
        x = parameter([1.0, 2.0])
        (x * x).sum().backward()

        # Act & Assert
        with pytest.raises(StateError):
            (x * x).sum().backward()

    def test_backward_after_zero_grad_succeeds(self):
        """Test zero_grad resets the guard"""
        # Arrange
        x = parameter([1.0, 2.0])
        (x * x).sum().backward()
        x.zero_grad()

        # Act
        (x * 3.0).sum().backward()

        # Assert
        np.testing.assert_array_equal(x.grad, [3.0, 3.0])

    def test_no_grad_builds_no_graph(self):
        """Test no_grad results do not require gradients"""
        # Arrange
        x = parameter([1.0])

        # Act
        with no_grad():
            y = x * 2.0

        # Assert
        assert not y.requires_grad

    def test_composite_graph_matches_finite_differences(self):
        """Test a graph mixing every differentiable op against central differences"""
        # Arrange
        rng = np.random.default_rng(0)
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4, 5)))
        gain = parameter(rng.normal(size=5))
        bias = parameter(rng.normal(size=5))
        allowed = rng.uniform(size=(3, 5)) > 0.3
        allowed[:, 0] = True

        def loss():
            h = layer_norm(matmul(a, b).tanh(), gain, bias)
            p = softmax(masked_fill(h, allowed), axis=-1)
            mixed = where(allowed, p.exp(), (h * h).sigmoid())
            joined = concat([mixed, log_softmax(h)], axis=1)
            return minimum(joined, joined * 0.5 + 0.1).sum() + (h[:, 1:3] ** 2).mean()

        # Act
        results = check_gradients(loss, [a, b, gain, bias], make_rng(0, "gradcheck"), samples=10)

        # Assert
        assert max_relative_error(results) < 1e-4

    def test_conv2d_matches_finite_differences(self):
        """Test convolution gradients for input, weights and bias"""
        # Arrange
        rng = np.random.default_rng(3)
        x = parameter(rng.normal(size=(2, 5, 5, 2)))
        w = parameter(rng.normal(size=(2 * 2 * 2, 3)))
        b = parameter(rng.normal(size=3))

        def loss():
            return (conv2d(x, w, b, kernel=2, stride=1).tanh() ** 2).sum()

        # Act
        results = check_gradients(loss, [x, w, b], make_rng(1, "gradcheck"), samples=10)

        # Assert
        assert max_relative_error(results) < 1e-4

    def test_repeated_take_indices_accumulate(self):
        """Test gather backward accumulates repeated indices"""
        # Arrange
        x = parameter([1.0, 2.0, 3.0])

        # Act
        x.take(np.array([0, 0, 2])).sum().backward()

        # Assert
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


# ============================================================================
# Tests: Adam
# ============================================================================

@pytest.mark.unit
class TestAdam:
    """Test Adam updates"""

    def test_first_step_moves_by_lr(self):
        """Test grad=1 on a fresh state moves the parameter by about lr"""
        # Arrange
        p = parameter([1.0])
        state = AdamState(lr=0.001)

        # Act
        adam_step({"p": p}, {"p": np.array([1.0])}, state)

        # Assert
        assert p.data[0] == pytest.approx(1.0 - 0.001, abs=1e-9)
        assert state.step_count == 1

    def test_zero_gradient_is_fixed_point(self):
        """Test zero gradients leave parameters unchanged"""
        # Arrange
        p = parameter([0.5, -0.5])
        state = AdamState()

        # Act
        adam_step({"p": p}, {"p": np.zeros(2)}, state)

        # Assert
        np.testing.assert_array_equal(p.data, [0.5, -0.5])

    def test_two_steps_move_against_gradient(self):
        """Test constant gradient gives monotone motion and step_count 2"""
        # Arrange
        p = parameter([0.0])
        state = AdamState()

        # Act
        adam_step({"p": p}, {"p": np.array([2.0])}, state)
        first = p.data[0]
        adam_step({"p": p}, {"p": np.array([2.0])}, state)

        # Assert
        assert state.step_count == 2
        assert p.data[0] < first < 0.0

    def test_non_finite_gradient_rejected_without_changes(self):
        """Test NaN gradients raise with diagnostics and leave everything untouched"""
        # Arrange
        p = parameter([1.0, 2.0])
        q = parameter([3.0])
        state = AdamState()

        # Act
        with pytest.raises(NonFiniteGradientError) as exc:
            adam_step({"p": p, "q": q}, {"p": np.array([np.nan, 1.0]), "q": np.array([1.0])}, state)

        # Assert
        assert exc.value.diagnostics == {"p": 1}
        assert state.step_count == 0
        assert state.first_moment == {}
        np.testing.assert_array_equal(q.data, [3.0])

    def test_gradient_shape_mismatch_raises(self):
        """Test incongruent gradient shapes raise ShapeError"""
        # Act & Assert
        with pytest.raises(ShapeError):
            adam_step({"p": parameter([1.0, 2.0])}, {"p": np.ones(3)}, AdamState())

    def test_non_positive_lr_rejected(self):
        """Test Adam itself requires lr > 0"""
        # Act & Assert
        with pytest.raises(ContractError):
            AdamState(lr=0.0)

    def test_optimizer_skips_parameters_without_gradient(self):
        """Test None gradients are skipped"""
        # Arrange
        a, b = parameter([1.0]), parameter([1.0])
        opt = Adam({"a": a, "b": b}, lr=0.1)
        (a * 2.0).sum().backward()

        # Act
        opt.step()

        # Assert
        assert a.data[0] < 1.0
        assert b.data[0] == 1.0


# ============================================================================
# Tests: Modules and RNG
# ============================================================================

@pytest.mark.unit
class TestModules:
    """Test parameter containers"""

    def test_named_parameters_are_dotted_and_ordered(self):
        """Test nested modules yield stable dotted names"""
        # Arrange
        mlp = Mlp(3, 4, 2, make_rng(0, "mlp"))

        # Act
        names = [name for name, _ in mlp.named_parameters()]

        # Assert
        assert names == ["hidden.weight", "hidden.bias", "out.weight", "out.bias"]

    def test_state_dict_round_trip(self):
        """Test load_state_dict restores a snapshot in place"""
        # Arrange
        layer = Linear(3, 2, make_rng(0, "lin"))
        snapshot = layer.state_dict()
        layer.weight.data += 1.0

        # Act
        layer.load_state_dict(snapshot)

        # Assert
        np.testing.assert_array_equal(layer.weight.data, snapshot["weight"])

    def test_load_state_dict_shape_mismatch_raises(self):
        """Test wrong shapes are rejected"""
        # Arrange
        norm = LayerNorm(4)

        # Act & Assert
        with pytest.raises(ShapeError):
            norm.load_state_dict({"gain": np.ones(3), "bias": np.zeros(4)})

    def test_mlp_width_mismatch_raises(self):
        """Test wrong input width raises ShapeError"""
        # Act & Assert
        with pytest.raises(ShapeError):
            Mlp(3, 4, 2, make_rng(0, "mlp"))(Tensor(np.ones((1, 5))))


@pytest.mark.unit
class TestRng:
    """Test seeded streams"""

    def test_same_stream_reproduces(self):
        """Test identical (seed, stream) pairs give identical draws"""
        # Act & Assert
        np.testing.assert_array_equal(make_rng(7, "init", 2).normal(size=5), make_rng(7, "init", 2).normal(size=5))

    def test_different_streams_differ(self):
        """Test distinct stream keys give distinct draws"""
        # Act & Assert
        assert not np.array_equal(make_rng(7, "a").normal(size=5), make_rng(7, "b").normal(size=5))
