#!/usr/bin/env python3
"""
Numerical Core Module
=====================

Dense float64 kernel shared by every stage: symmetric eigendecomposition,
the Adam optimizer step, and a central finite-difference gradient oracle
used to check analytic gradients.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Tuple

import numpy as np

from src.utils.errors import NonFiniteEvaluation, NotSquare, NotSymmetric, ShapeMismatch

logger = logging.getLogger(__name__)

# Matrices are plain float64 numpy arrays; the alias documents intent.
Matrix = np.ndarray

SYMMETRY_TOL = 1e-9


def as_matrix(values, name: str = "matrix") -> Matrix:
    """
    Convert input to a finite float64 array

    Args:
        values: Array-like input
        name (str): Name used in error messages

    Returns:
        Matrix: float64 array (copy when conversion was needed)
    """
    m = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFiniteEvaluation(f"{name} contains NaN or Inf")
    return m


def sym_eig(m: Matrix, tol: float = SYMMETRY_TOL) -> Tuple[np.ndarray, Matrix]:
    """
    Eigendecomposition of a symmetric matrix

    Args:
        m (Matrix): Square symmetric matrix
        tol (float): Maximum allowed |m - m^T| entry

    Returns:
        Tuple[np.ndarray, Matrix]: Ascending eigenvalues and orthonormal
        eigenvectors as columns, so that m @ V == V @ diag(w)
    """
    m = as_matrix(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > tol:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    # eigh only reads one triangle; symmetrize so both halves count
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (m + m.T))
    return eigenvalues, eigenvectors


@dataclass(frozen=True)
class AdamState:
    """Optimizer state for one parameter array."""
    first_moment: Matrix
    second_moment: Matrix
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.003

    @classmethod
    def zeros_like(cls, params: Matrix, learning_rate: float = 0.003, **kwargs) -> "AdamState":
        shape = np.shape(params)
        return cls(first_moment=np.zeros(shape), second_moment=np.zeros(shape),
                   learning_rate=learning_rate, **kwargs)


def adam_step(params: Matrix, grads: Matrix, state: AdamState) -> Tuple[Matrix, AdamState]:
    """
    One bias-corrected Adam update

    Args:
        params (Matrix): Current parameters
        grads (Matrix): Gradient of the objective at ``params``
        state (AdamState): Optimizer state tracking ``params``

    Returns:
        Tuple[Matrix, AdamState]: New parameters and the advanced state
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeMismatch(f"params {params.shape} vs grads {grads.shape}")
    if state.first_moment.shape != params.shape or state.second_moment.shape != params.shape:
        raise ShapeMismatch(f"optimizer state {state.first_moment.shape} vs params {params.shape}")

    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=step)


def finite_diff_grad(f: Callable[[Matrix], float], x: Matrix, h: float = 1e-6) -> Matrix:
    """
    Central finite-difference gradient of a scalar function

    Args:
        f (Callable): Scalar function of an array
        x (Matrix): Evaluation point
        h (float): Difference step, > 0

    Returns:
        Matrix: Array shaped like ``x`` with (f(x+h e) - f(x-h e)) / 2h per entry
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + h
        f_plus = float(f(x))
        flat[k] = original - h
        f_minus = float(f(x))
        flat[k] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteEvaluation(f"non-finite value at flat index {k}")
        grad_flat[k] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: Matrix, numeric: Matrix, floor: float = 1e-8) -> float:
    """Max absolute gradient difference scaled by the largest numeric gradient entry."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ShapeMismatch(f"{analytic.shape} vs {numeric.shape}")
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


@dataclass
class ParameterSet:
    """Named parameter arrays with one Adam state each."""
    params: dict
    states: dict = field(default_factory=dict)

    def step(self, grads: dict, learning_rate: float) -> None:
        for name, value in self.params.items():
            if name not in grads:
                continue
            state = self.states.get(name) or AdamState.zeros_like(value, learning_rate=learning_rate)
            self.params[name], self.states[name] = adam_step(value, grads[name], state)
