"""Sliding data window and the 4-dimensional filter-monitoring state.

The state vector summarizes the filter's situation on a log10 scale:

    s1  instantaneous prior loss
    s2  window-averaged posterior loss, normalized by the input norm
    s3  instantaneous input norm
    s4  auto-regressive smoothing of the estimate displacement (step-size
        effect divided out)

Every log10 argument is clamped below at ``log_floor`` so the state stays
finite for any finite input stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


@dataclass(frozen=True)
class FeatureConfig:
    """User parameters of the state computation."""

    M_av: int = 300
    varpi: float = 0.3
    log_floor: float = 1e-12

    def __post_init__(self):
        if self.M_av < 1:
            raise ValueError(f"M_av must be a positive integer, got {self.M_av}")
        if not 0.0 < self.varpi < 1.0:
            raise ValueError(f"varpi must lie in (0, 1), got {self.varpi}")
        if not self.log_floor > 0:
            raise ValueError(f"log_floor must be positive, got {self.log_floor}")


class StateVector(NamedTuple):
    s1: float
    s2: float
    s3: float
    s4: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


class DataWindow:
    """Ring buffer of the most recent M_av input/output pairs.

    Input norms are cached at insertion; evicts oldest first.
    """

    def __init__(self, M_av: int, L: int):
        if M_av < 1:
            raise ValueError(f"window capacity must be positive, got {M_av}")
        self.M_av = M_av
        self.L = L
        self._X = np.zeros((M_av, L))
        self._y = np.zeros(M_av)
        self._xnorm = np.zeros(M_av)
        self._pos = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def append(self, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.L,):
            raise ValueError(f"pair has shape {x.shape}, window expects ({self.L},)")
        self._X[self._pos] = x
        self._y[self._pos] = y
        self._xnorm[self._pos] = np.sqrt(x @ x)
        self._pos = (self._pos + 1) % self.M_av
        self._count = min(self._count + 1, self.M_av)

    def recent(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Newest-first views of the last min(k, len) pairs: (X, y, ||x||)."""
        k = min(k, self._count)
        idx = (self._pos - 1 - np.arange(k)) % self.M_av
        return self._X[idx], self._y[idx], self._xnorm[idx]


def _windowed_log_loss(
    X: np.ndarray, y: np.ndarray, xnorm: np.ndarray, theta: np.ndarray, floor: float
) -> float:
    """Mean of log10(|y - theta^T x| / ||x||) over the given pairs, clamped."""
    errs = np.abs(y - X @ theta)
    return float(
        np.mean(np.log10(np.maximum(errs, floor) / np.maximum(xnorm, floor)))
    )


def compute_state(
    window: DataWindow,
    theta_n: np.ndarray,
    x_n: np.ndarray,
    y_n: float,
    prev_s4: float,
    cfg: FeatureConfig,
    rho: float,
    theta_prev: Optional[np.ndarray] = None,
) -> StateVector:
    """State vector at the step where (x_n, y_n) has just arrived.

    The window must hold the pairs strictly before the current one (append
    the current pair only after calling this). With an empty window s2 is 0
    by the cold-start convention. When ``theta_prev`` is None the smoothed
    displacement s4 is left at ``prev_s4`` verbatim; the caller seeds it at
    the first step, normally via :func:`initial_s4`.
    """
    theta_n = np.asarray(theta_n, dtype=np.float64)
    x_n = np.asarray(x_n, dtype=np.float64)
    floor = cfg.log_floor

    e = abs(y_n - float(theta_n @ x_n))
    s1 = float(np.log10(max(e, floor)))
    s3 = float(np.log10(max(np.sqrt(x_n @ x_n), floor)))

    if len(window) == 0:
        s2 = 0.0
    else:
        X, y, xnorm = window.recent(cfg.M_av)
        s2 = _windowed_log_loss(X, y, xnorm, theta_n, floor)

    if theta_prev is None:
        s4 = float(prev_s4)
    else:
        d = theta_n - np.asarray(theta_prev, dtype=np.float64)
        disp = np.sqrt(d @ d)
        s4 = cfg.varpi * prev_s4 + (1.0 - cfg.varpi) * float(
            np.log10(max(disp, floor) / rho)
        )
    return StateVector(s1, s2, s3, s4)


def initial_s4(p0: float, s1_0: float, s3_0: float) -> float:
    """Seed for the s4 recursion: log10(p0) + (p0 - 1) * s1_0 + s3_0.

    Equals log10(||theta_1 - theta_0|| / rho) when theta_1 is the first LMP
    step taken with p = p0 and no log clamp triggered.
    """
    return float(np.log10(p0) + (p0 - 1.0) * s1_0 + s3_0)


def one_step_loss(window: DataWindow, theta_next: np.ndarray, cfg: FeatureConfig) -> float:
    """Window-averaged posterior loss of the freshly updated estimate.

    The window must already include the current pair; the average runs over
    the newest min(len, M_av) pairs. By construction this equals the s2 the
    next state will report for the same window contents and estimate.
    """
    if len(window) == 0:
        raise ValueError("one_step_loss needs at least one pair in the window")
    theta_next = np.asarray(theta_next, dtype=np.float64)
    X, y, xnorm = window.recent(cfg.M_av)
    return _windowed_log_loss(X, y, xnorm, theta_next, cfg.log_floor)
