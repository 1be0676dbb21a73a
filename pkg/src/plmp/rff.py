"""Random Fourier features approximating a Gaussian kernel on (state, action).

A point z is the 5-vector [s1, s2, s3, s4, a]. Frequencies are drawn once
from N(0, sigma^-2 I) and phases uniformly from [0, 2*pi); after that the
map is frozen, so features are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .features import StateVector

STATE_ACTION_DIM = 5


class StateAction(NamedTuple):
    s: StateVector
    a: float

    def as_vector(self) -> np.ndarray:
        return np.array([*self.s, self.a], dtype=np.float64)


PointLike = Union[StateAction, np.ndarray, list, tuple]


def _as_point(z: PointLike) -> np.ndarray:
    if isinstance(z, StateAction):
        return z.as_vector()
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (STATE_ACTION_DIM,):
        raise ValueError(f"expected a {STATE_ACTION_DIM}-vector, got shape {z.shape}")
    return z


@dataclass(frozen=True, eq=False)
class RffMap:
    """Frozen random projection: frequencies V (D x 5), phases b (D,)."""

    V: np.ndarray
    b: np.ndarray
    sigma: float

    def __post_init__(self):
        if self.V.ndim != 2 or self.V.shape[1] != STATE_ACTION_DIM:
            raise ValueError(f"V must be (D, {STATE_ACTION_DIM}), got {self.V.shape}")
        if self.b.shape != (self.V.shape[0],):
            raise ValueError("b must have one phase per frequency row")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def D(self) -> int:
        return self.V.shape[0]


def draw_map(D: int, sigma: float, rng: np.random.Generator) -> RffMap:
    """Draw a fresh map: rows of V i.i.d. N(0, sigma^-2 I), b ~ U[0, 2*pi)."""
    if D < 1:
        raise ValueError(f"D must be a positive integer, got {D}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    V = rng.standard_normal((D, STATE_ACTION_DIM)) / sigma
    b = rng.uniform(0.0, 2.0 * np.pi, size=D)
    return RffMap(V=V, b=b, sigma=float(sigma))


def features_batch(rmap: RffMap, Z: np.ndarray) -> np.ndarray:
    """sqrt(2/D) * cos(V z + b) for each row z of Z; returns (m, D)."""
    Z = np.asarray(Z, dtype=np.float64)
    return np.sqrt(2.0 / rmap.D) * np.cos(Z @ rmap.V.T + rmap.b)


def features(rmap: RffMap, z: PointLike) -> np.ndarray:
    """Feature vector of a single (state, action) point; returns (D,)."""
    return features_batch(rmap, _as_point(z)[None, :])[0]


def gaussian_kernel(z: PointLike, z2: PointLike, sigma: float) -> float:
    """Exact Gaussian kernel exp(-||z - z'||^2 / (2 sigma^2)); test oracle."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = _as_point(z) - _as_point(z2)
    return float(np.exp(-(d @ d) / (2.0 * sigma**2)))


def median_heuristic_bandwidth(Z: np.ndarray) -> float:
    """Median pairwise distance over observed points (bandwidth heuristic)."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need at least two points for the median heuristic")
    diff = Z[:, None, :] - Z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    iu = np.triu_indices(Z.shape[0], k=1)
    med = float(np.median(dist[iu]))
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero; points degenerate")
    return med


def save_map(rmap: RffMap, path: Union[str, Path]) -> None:
    """Persist (V, b, sigma) as an .npz archive."""
    np.savez(path, V=rmap.V, b=rmap.b, sigma=np.float64(rmap.sigma))


def load_map(path: Union[str, Path]) -> RffMap:
    with np.load(path) as data:
        return RffMap(V=data["V"], b=data["b"], sigma=float(data["sigma"]))
