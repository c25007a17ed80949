import numpy as np
import pytest

from fuserec.errors import DimensionError, GradCheckError
from fuserec.linalg import (
    apply_activation,
    grad_check,
    matmul,
    relu,
    sigmoid,
    sigmoid_grad_from_output,
)


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_zero():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.zeros((2, 2)), m), np.zeros((2, 2)))


def test_matmul_hand_value():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0], [6.0]])
    assert np.array_equal(matmul(a, b), np.array([[17.0], [39.0]]))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_relu_hand_value():
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0]))


def test_sigmoid_values():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert sigmoid(np.array([1.5]))[0] == pytest.approx(0.8175744761936437, abs=1e-12)


def test_sigmoid_extremes_finite():
    out = sigmoid(np.array([-1e4, 1e4]))
    assert np.all(np.isfinite(out))
    assert 0.0 <= out[0] < out[1] <= 1.0


def test_sigmoid_symmetry(rng):
    x = rng.standard_normal(64)
    assert np.allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-14)


def test_sigmoid_grad_from_output(rng):
    x = rng.standard_normal(32)
    s = sigmoid(x)
    # d sigmoid / dx = s(1-s)
    eps = 1e-6
    numeric = (sigmoid(x + eps) - sigmoid(x - eps)) / (2 * eps)
    assert np.allclose(sigmoid_grad_from_output(s), numeric, atol=1e-9)


def test_apply_activation_kinds(rng):
    x = rng.standard_normal((4, 3))
    assert np.array_equal(apply_activation(x, "identity"), x)
    assert np.array_equal(apply_activation(x, "relu"), np.maximum(x, 0.0))
    with pytest.raises(ValueError):
        apply_activation(x, "tanh")


class TestGradCheck:
    def test_quadratic_is_exact(self, rng):
        theta = rng.standard_normal(10)

        def f(t):
            return float(t @ t), 2.0 * t

        assert grad_check(f, theta) < 1e-8

    def test_constant_loss(self):
        def f(t):
            return 1.0, np.zeros_like(t)

        assert grad_check(f, np.ones(5)) == 0.0

    def test_detects_wrong_gradient(self, rng):
        theta = rng.standard_normal(6)

        def f(t):
            return float(t @ t), 2.0 * t + 0.1  # deliberately off

        assert grad_check(f, theta) > 1e-3

    def test_nonfinite_loss_raises(self):
        def f(t):
            return float("nan"), np.zeros_like(t)

        with pytest.raises(GradCheckError):
            grad_check(f, np.ones(3))

    def test_gradient_length_mismatch(self):
        def f(t):
            return 0.0, np.zeros(t.size + 1)

        with pytest.raises(DimensionError):
            grad_check(f, np.ones(3))

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            grad_check(lambda t: (0.0, np.zeros_like(t)), np.ones(2), epsilon=0.0)
