"""Least-mean-p-power (LMP) adaptive filter.

The filter tracks a linear system theta from streaming pairs (x, y) by
stochastic gradient descent on the p-th power of the prediction error,
with p restricted to [1, 2] so the loss stays convex. p = 2 is plain LMS,
p = 1 is sign-LMS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteInputError(ValueError):
    """An update received NaN or infinite data."""


@dataclass
class FilterState:
    """Current estimate of the system parameters plus the step size.

    theta : length-L estimate of the true system vector
    rho   : learning rate, strictly positive
    """

    theta: np.ndarray
    rho: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1:
            raise ValueError(f"theta must be 1-D, got shape {self.theta.shape}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @property
    def L(self) -> int:
        return self.theta.shape[0]


def prior_error(state: FilterState, x: np.ndarray, y: float) -> float:
    """Prediction error y - theta^T x before the estimate is updated."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != state.theta.shape:
        raise ValueError(
            f"input has shape {x.shape}, filter expects {state.theta.shape}"
        )
    return float(y - state.theta @ x)


def lmp_update_direction(e: float, p: float) -> float:
    """Scalar factor p * |e|^(p-2) * e, evaluated as p * sign(e) * |e|^(p-1).

    The sign/magnitude form removes the removable singularity at e = 0 for
    p < 2 (sign(0) = 0, so a zero error contributes a zero step for every p).
    """
    if e == 0.0:
        return 0.0
    return p * np.sign(e) * abs(e) ** (p - 1.0)


def lmp_step(state: FilterState, x: np.ndarray, y: float, p: float) -> FilterState:
    """One LMP step: theta <- theta + rho * p * sign(e) * |e|^(p-1) * x."""
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"p must lie in [1, 2], got {p}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != state.theta.shape:
        raise ValueError(
            f"input has shape {x.shape}, filter expects {state.theta.shape}"
        )
    if not np.isfinite(x).all() or not np.isfinite(y):
        raise NonFiniteInputError("non-finite input pair")
    e = y - float(state.theta @ x)
    if not np.isfinite(e):
        raise NonFiniteInputError("non-finite prior error")
    if e == 0.0:
        return FilterState(state.theta.copy(), state.rho)
    scale = state.rho * lmp_update_direction(e, p)
    return FilterState(state.theta + scale * x, state.rho)
