"""Optimizer contract: bias-corrected updates, guards, determinism."""

import numpy as np
import pytest

from dynalink.engine import AdamState, Tensor, adam_step


def P(x, name="p"):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True, name=name)


class TestFirstStep:
    def test_unit_gradient_moves_by_lr(self):
        """With m-hat = v-hat = 1 after one step, the update is exactly
        -lr / (1 + eps)."""
        p = P([0.0])
        state = AdamState([p])
        adam_step([p], [np.array([1.0])], state, lr=0.001)
        expected = -0.001 * 1.0 / (1.0 + state.eps)
        assert abs(p.data[0] - expected) <= 1e-18
        assert abs(p.data[0] + 0.001) <= 1e-6

    def test_zero_gradient_leaves_parameter_unchanged(self):
        p = P([3.0, -1.0])
        state = AdamState([p])
        adam_step([p], [np.zeros(2)], state, lr=0.01)
        assert np.array_equal(p.data, [3.0, -1.0])

    def test_determinism(self):
        def run():
            p = P([[0.5, -0.5]])
            state = AdamState([p])
            g = np.array([[0.3, -0.7]])
            for _ in range(5):
                adam_step([p], [g], state, lr=0.01)
            return p.data.copy()

        assert np.array_equal(run(), run())


class TestGuards:
    def test_nonfinite_gradient_names_parameter(self):
        p = P([0.0], name="embedding")
        state = AdamState([p])
        with pytest.raises(FloatingPointError) as err:
            adam_step([p], [np.array([np.nan])], state, lr=0.01)
        assert "embedding" in str(err.value)

    def test_negative_lr_rejected(self):
        p = P([0.0])
        with pytest.raises(ValueError):
            adam_step([p], [np.array([1.0])], AdamState([p]), lr=-0.1)

    def test_shape_mismatch_rejected(self):
        p = P([0.0, 1.0])
        with pytest.raises(ValueError):
            adam_step([p], [np.zeros(3)], AdamState([p]), lr=0.1)

    def test_none_gradient_falls_back_to_param_grad(self):
        p = P([1.0])
        p.grad = np.array([2.0])
        state = AdamState([p])
        adam_step([p], [None], state, lr=0.1)
        assert p.data[0] < 1.0


class TestTrajectory:
    def test_quadratic_converges(self):
        """Minimizing (p - 4)^2 walks p to 4."""
        p = P([0.0])
        state = AdamState([p])
        for _ in range(3000):
            g = 2.0 * (p.data - 4.0)
            adam_step([p], [g], state, lr=0.05)
        assert abs(p.data[0] - 4.0) < 1e-3

    def test_step_counter_advances(self):
        p = P([0.0])
        state = AdamState([p])
        adam_step([p], [np.array([1.0])], state, lr=0.01)
        adam_step([p], [np.array([1.0])], state, lr=0.01)
        assert state.step_count == 2
