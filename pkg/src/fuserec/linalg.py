"""Dense numerics shared by every model component.

Matrices are plain float64 ``numpy.ndarray`` values and are treated as
immutable once handed to another component. Training and all gradient
checking run in double precision; single precision is nowhere required.
"""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

from fuserec.errors import DimensionError, GradCheckError

Array = np.ndarray


def as_matrix(values) -> Array:
    """Coerce nested sequences to a float64 2-D array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a: Array, b: Array) -> Array:
    """Matrix product with an explicit shape check."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def relu(x: Array) -> Array:
    return np.maximum(x, 0.0)


def relu_grad(x: Array) -> Array:
    """Derivative of relu evaluated at the pre-activation x (0 at the kink)."""
    return (x > 0.0).astype(np.float64)


def sigmoid(x: Array) -> Array:
    # Split by sign so exp never overflows; output is strictly inside (0, 1).
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad_from_output(s: Array) -> Array:
    return s * (1.0 - s)


def apply_activation(x: Array, kind: str) -> Array:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_grad(pre: Array, kind: str) -> Array:
    if kind == "relu":
        return relu_grad(pre)
    if kind == "sigmoid":
        s = sigmoid(pre)
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation kind: {kind!r}")


def grad_check(
    loss_and_grad: Callable[[Array], Tuple[float, Array]],
    theta: Array,
    epsilon: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central finite differences.

    ``loss_and_grad`` maps a flat float64 parameter vector to
    ``(loss, gradient)``; only the loss value is used at perturbed points.
    Returns the maximum relative error over all coordinates, with the
    denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    theta = np.asarray(theta, dtype=np.float64).ravel()
    loss0, grad = loss_and_grad(theta)
    if not np.isfinite(loss0):
        raise GradCheckError(-1, "loss is non-finite at the unperturbed point")
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.shape != theta.shape:
        raise DimensionError(
            f"gradient length {grad.shape[0]} does not match parameter length {theta.shape[0]}"
        )

    max_rel = 0.0
    probe = theta.copy()
    for i in range(theta.size):
        probe[i] = theta[i] + epsilon
        up, _ = _probe_loss(loss_and_grad, probe, i)
        probe[i] = theta[i] - epsilon
        down, _ = _probe_loss(loss_and_grad, probe, i)
        probe[i] = theta[i]
        numeric = (up - down) / (2.0 * epsilon)
        denom = max(abs(grad[i]), abs(numeric), 1e-8)
        max_rel = max(max_rel, abs(grad[i] - numeric) / denom)
    return max_rel


def _probe_loss(loss_and_grad, probe: Array, index: int):
    value = loss_and_grad(probe)
    loss = value[0] if isinstance(value, tuple) else value
    if not np.isfinite(loss):
        raise GradCheckError(
            index, f"loss is non-finite at finite-difference probe for parameter {index}"
        )
    return loss, None
