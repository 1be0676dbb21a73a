"""Synthetic system-identification streams with outlier noise.

The data model is y = theta_star^T x + o with x ~ N(0, I_L) i.i.d. and o
either alpha-stable (heavy-tailed) or sparse uniform outliers mixed with
Gaussian noise at a fixed SNR. The true system is redrawn once mid-run to
exercise tracking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

NOISE_KINDS = ("alpha_stable", "sparse")


@dataclass
class ExperimentConfig:
    """Scenario parameters for one synthetic stream."""

    L: int = 100
    rho: float = 1e-3
    total_steps: int = 40_000
    change_step: int = 20_000
    noise_kind: str = "alpha_stable"
    # alpha-stable parameters
    alpha_s: float = 1.0
    beta_s: float = 0.5
    sigma_s: float = 1.0
    # sparse-outlier parameters
    outlier_prob: float = 0.1
    outlier_range: float = 100.0
    snr_db: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")
        if not 0 < self.change_step < self.total_steps:
            raise ValueError(
                f"change_step must lie in (0, total_steps), got {self.change_step}"
            )
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise ValueError(f"outlier_prob must lie in [0, 1], got {self.outlier_prob}")
        if not (0.0 < self.alpha_s <= 2.0):
            raise ValueError(f"alpha_s must lie in (0, 2], got {self.alpha_s}")
        if not -1.0 <= self.beta_s <= 1.0:
            raise ValueError(f"beta_s must lie in [-1, 1], got {self.beta_s}")
        if not self.sigma_s > 0:
            raise ValueError(f"sigma_s must be positive, got {self.sigma_s}")


@dataclass
class StreamSample:
    """One emitted pair plus diagnostics (noise draw, current true system)."""

    x: np.ndarray
    y: float
    o: float
    theta_star: np.ndarray


def sample_alpha_stable(
    alpha_s: float,
    beta_s: float,
    sigma_s: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """Draw from the stable law S(alpha, beta, sigma, 0) in the S1 convention.

    Chambers-Mallows-Stuck transform; the alpha = 1 case takes the separate
    logarithmic branch. For alpha = 1 the S1 scale shift (2/pi) beta sigma
    ln(sigma) is included (it vanishes at sigma = 1).
    """
    if not (0.0 < alpha_s <= 2.0):
        raise ValueError(f"alpha_s must lie in (0, 2], got {alpha_s}")
    if not -1.0 <= beta_s <= 1.0:
        raise ValueError(f"beta_s must lie in [-1, 1], got {beta_s}")
    if not sigma_s > 0:
        raise ValueError(f"sigma_s must be positive, got {sigma_s}")

    u = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size=size)
    w = rng.standard_exponential(size=size)
    if alpha_s == 1.0:
        half_pi = np.pi / 2.0
        t = half_pi + beta_s * u
        x = (t * np.tan(u) - beta_s * np.log((half_pi * w * np.cos(u)) / t)) / half_pi
        y = sigma_s * x + (2.0 / np.pi) * beta_s * sigma_s * np.log(sigma_s)
    else:
        ta = np.tan(np.pi * alpha_s / 2.0)
        b0 = np.arctan(beta_s * ta) / alpha_s
        s0 = (1.0 + (beta_s * ta) ** 2) ** (1.0 / (2.0 * alpha_s))
        x = (
            s0
            * np.sin(alpha_s * (u + b0))
            / np.cos(u) ** (1.0 / alpha_s)
            * (np.cos(u - alpha_s * (u + b0)) / w) ** ((1.0 - alpha_s) / alpha_s)
        )
        y = sigma_s * x
    return float(y) if size is None else y


def sample_sparse_noise(
    cfg: ExperimentConfig,
    signal_power: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """Uniform outlier on [-range, range] w.p. outlier_prob, else Gaussian.

    The Gaussian branch variance is signal_power / 10^(snr_db / 10).
    """
    noise_std = np.sqrt(signal_power / 10.0 ** (cfg.snr_db / 10.0))
    n = 1 if size is None else size
    is_outlier = rng.random(n) < cfg.outlier_prob
    out = np.where(
        is_outlier,
        rng.uniform(-cfg.outlier_range, cfg.outlier_range, size=n),
        noise_std * rng.standard_normal(n),
    )
    return float(out[0]) if size is None else out


class Environment:
    """Stateful stream generator for one trial."""

    def __init__(self, cfg: ExperimentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.n = 0
        self.theta_star = rng.standard_normal(cfg.L)
        self._signal_power = float(self.theta_star @ self.theta_star)

    def _draw_noise(self) -> float:
        cfg = self.cfg
        if cfg.noise_kind == "alpha_stable":
            return sample_alpha_stable(cfg.alpha_s, cfg.beta_s, cfg.sigma_s, self.rng)
        return sample_sparse_noise(cfg, self._signal_power, self.rng)

    def next_sample(self) -> StreamSample:
        """Emit the next pair; the true system is redrawn at change_step."""
        if self.n == self.cfg.change_step:
            self.theta_star = self.rng.standard_normal(self.cfg.L)
            self._signal_power = float(self.theta_star @ self.theta_star)
        x = self.rng.standard_normal(self.cfg.L)
        o = self._draw_noise()
        y = float(self.theta_star @ x) + o
        self.n += 1
        return StreamSample(x=x, y=y, o=o, theta_star=self.theta_star)

    def samples(self, steps: Optional[int] = None) -> Iterator[StreamSample]:
        steps = self.cfg.total_steps if steps is None else steps
        for _ in range(steps):
            yield self.next_sample()


def dump_stream(
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    path: Union[str, Path],
    steps: Optional[int] = None,
) -> Path:
    """Write (n, o, y, changed) rows to CSV for debugging."""
    path = Path(path)
    env = Environment(cfg, rng)
    steps = cfg.total_steps if steps is None else steps
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "o", "y", "changed"])
        for i in range(steps):
            s = env.next_sample()
            writer.writerow([i, f"{s.o:.12g}", f"{s.y:.12g}", int(i == cfg.change_step)])
    return path
