import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.numcore import (AdamState, ParameterSet, adam_step, finite_diff_grad, relative_error,
                              sym_eig)
from src.utils.errors import NonFiniteEvaluation, NotSquare, NotSymmetric, ShapeMismatch


class TestSymEig:
    def test_identity(self):
        values, vectors = sym_eig(np.eye(2))
        assert_allclose(values, [1.0, 1.0])
        assert_allclose(vectors.T @ vectors, np.eye(2), atol=1e-12)

    def test_two_by_two(self):
        values, _ = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert_allclose(values, [1.0, 3.0], atol=1e-12)

    def test_random_reconstruction(self, rng):
        a = rng.normal(size=(5, 5))
        m = a + a.T
        values, vectors = sym_eig(m)
        assert np.all(np.diff(values) >= 0)
        assert np.max(np.abs(m @ vectors - vectors * values)) <= 1e-9
        assert np.max(np.abs(vectors.T @ vectors - np.eye(5))) <= 1e-9
        assert np.max(np.abs(vectors @ np.diag(values) @ vectors.T - m)) <= 1e-9

    def test_asymmetric_rejected(self):
        with pytest.raises(NotSymmetric):
            sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(NotSquare):
            sym_eig(np.ones((2, 3)))


class TestAdam:
    def test_zero_gradient_is_a_no_op(self):
        params = np.array([[1.0, -2.0], [0.5, 3.0]])
        state = AdamState.zeros_like(params)
        new_params, new_state = adam_step(params, np.zeros_like(params), state)
        assert_array_equal(new_params, params)
        assert_array_equal(new_state.first_moment, 0.0)
        assert_array_equal(new_state.second_moment, 0.0)
        assert new_state.step_count == 1

    def test_first_step_moves_by_learning_rate(self):
        params = np.zeros(4)
        grads = np.array([0.5, -2.0, 1e-3, -7.0])
        new_params, _ = adam_step(params, grads, AdamState.zeros_like(params, learning_rate=0.003))
        assert_allclose(new_params, -0.003 * np.sign(grads), atol=1e-6)

    def test_scalar_trajectory_matches_reference(self):
        # reference: plain float arithmetic on f(x) = (x - 2)^2
        x_ref, m_ref, v_ref = 5.0, 0.0, 0.0
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        trace_ref = []
        for t in range(1, 11):
            g = 2.0 * (x_ref - 2.0)
            m_ref = b1 * m_ref + (1 - b1) * g
            v_ref = b2 * v_ref + (1 - b2) * g * g
            x_ref -= lr * (m_ref / (1 - b1 ** t)) / (math.sqrt(v_ref / (1 - b2 ** t)) + eps)
            trace_ref.append(x_ref)

        x = np.array([5.0])
        state = AdamState.zeros_like(x, learning_rate=lr)
        trace = []
        for _ in range(10):
            x, state = adam_step(x, 2.0 * (x - 2.0), state)
            trace.append(float(x[0]))
        assert_allclose(trace, trace_ref, rtol=0, atol=1e-10)
        assert state.step_count == 10

    def test_shape_mismatch(self):
        params = np.zeros(3)
        with pytest.raises(ShapeMismatch):
            adam_step(params, np.zeros(4), AdamState.zeros_like(params))
        with pytest.raises(ShapeMismatch):
            adam_step(params, np.zeros(3), AdamState.zeros_like(np.zeros(2)))

    def test_parameter_set_skips_missing_gradients(self):
        params = ParameterSet({"a": np.ones(2), "b": np.ones(3)})
        params.step({"a": np.array([1.0, -1.0])}, learning_rate=0.01)
        assert_allclose(params.params["a"], [0.99, 1.01], atol=1e-6)
        assert_array_equal(params.params["b"], np.ones(3))
        assert params.states["a"].step_count == 1
        assert "b" not in params.states


class TestFiniteDiff:
    def test_square(self):
        grad = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]), h=1e-5)
        assert abs(grad[0] - 6.0) <= 1e-6

    def test_sum_of_sines(self, rng):
        x = rng.uniform(-2, 2, size=6)
        grad = finite_diff_grad(lambda v: float(np.sum(np.sin(v))), x)
        assert_allclose(grad, np.cos(x), atol=1e-6)

    def test_quadratic_form(self, rng):
        a = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        grad = finite_diff_grad(lambda v: float(v @ a @ v), x)
        assert_allclose(grad, (a + a.T) @ x, atol=1e-5)

    def test_input_not_modified(self):
        x = np.array([1.0, 2.0])
        finite_diff_grad(lambda v: float(np.sum(v ** 2)), x)
        assert_array_equal(x, [1.0, 2.0])

    def test_non_finite_evaluation(self):
        with pytest.raises(NonFiniteEvaluation):
            finite_diff_grad(lambda v: float(np.log(v[0])), np.array([0.0]), h=1e-3)

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda v: 0.0, np.zeros(1), h=0.0)


def test_relative_error():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.1, 2.0]), np.array([1.0, 2.0])) == pytest.approx(0.05)
    # tiny gradients fall back to the floor
    assert relative_error(np.array([1e-9]), np.array([0.0])) == pytest.approx(0.1)
