"""Kernel-based approximate policy iteration for online p-norm selection.

The Q-function lives in the span of a frozen random Fourier feature map, so
it is just a D-dimensional weight vector. Each step alternates greedy policy
improvement over a finite p-grid with a steepest-descent policy-evaluation
update toward the hyperplane {Q : <Q, h> = g}, where h couples the current
(state, action) point with a sample average over user-chosen averaging
states, and g is the one-step loss. Prioritized experience replay re-applies
the same update to stored records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import (
    DataWindow,
    FeatureConfig,
    StateVector,
    compute_state,
    initial_s4,
    one_step_loss,
)
from .lmp import FilterState, lmp_step
from .rff import RffMap, StateAction, features, features_batch

AveragingStates = list[StateVector]


def validate_grid(grid: Sequence[float]) -> np.ndarray:
    """Admissible p-grid: nonempty, strictly increasing, inside [1, 2]."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("action grid must be a nonempty 1-D sequence")
    if not (np.diff(g) > 0).all():
        raise ValueError("action grid must be strictly increasing")
    if g[0] < 1.0 or g[-1] > 2.0:
        raise ValueError("action grid must be contained in [1, 2]")
    return g


@dataclass
class QFunction:
    """Q(z) = w^T phi(z) in feature space."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError(f"w must be 1-D, got shape {self.w.shape}")


def q_value(q: QFunction, rmap: RffMap, z) -> float:
    if q.w.shape[0] != rmap.D:
        raise ValueError(f"weight dim {q.w.shape[0]} != feature dim {rmap.D}")
    return float(q.w @ features(rmap, z))


def state_grid_points(s: StateVector, grid: np.ndarray) -> np.ndarray:
    """All (s, a) rows for a in the grid; shape (len(grid), 5)."""
    A = grid.shape[0]
    Z = np.empty((A, 5))
    Z[:, :4] = np.asarray(s, dtype=np.float64)
    Z[:, 4] = grid
    return Z


def greedy_index(qv: np.ndarray, tie_tol: float = 0.0) -> int:
    """Index of the minimizing action; ties break toward the smallest p.

    With tie_tol > 0, every action within tie_tol * (1 + |min|) of the
    minimum counts as tied, so near-resolution gaps also collapse to the
    smallest (most outlier-robust) p.
    """
    if tie_tol <= 0.0:
        return int(np.argmin(qv))
    m = float(qv.min())
    return int(np.nonzero(qv <= m + tie_tol * (1.0 + abs(m)))[0][0])


def greedy_action(q: QFunction, rmap: RffMap, s: StateVector, grid, tie_tol: float = 0.0) -> float:
    """argmin_a Q(s, a) over the grid; ties break toward the smallest p."""
    g = validate_grid(grid)
    qv = features_batch(rmap, state_grid_points(s, g)) @ q.w
    return float(g[greedy_index(qv, tie_tol)])


def generate_avg_states(
    window: DataWindow,
    theta_next: np.ndarray,
    s_curr: StateVector,
    n_av: int,
    cfg: FeatureConfig,
) -> AveragingStates:
    """Averaging states from re-used past data.

    The j-th state replaces the loss components of the current state with
    those of the j-th most recent pair evaluated at the updated estimate;
    the windowed components (s2, s4) are carried over from the current
    state. The window must already contain the current pair (j = 1).
    """
    if n_av < 1:
        raise ValueError(f"n_av must be positive, got {n_av}")
    if len(window) == 0:
        raise ValueError("averaging states need at least one stored pair")
    theta_next = np.asarray(theta_next, dtype=np.float64)
    X, y, xnorm = window.recent(n_av)
    floor = cfg.log_floor
    s1s = np.log10(np.maximum(np.abs(y - X @ theta_next), floor))
    s3s = np.log10(np.maximum(xnorm, floor))
    return [
        StateVector(float(s1s[j]), s_curr.s2, float(s3s[j]), s_curr.s4)
        for j in range(len(s1s))
    ]


def _avg_grid_features(
    rmap: RffMap, avg: AveragingStates, grid: np.ndarray
) -> np.ndarray:
    """Features of every (averaging state, grid action) pair; (k, A, D)."""
    k, A = len(avg), grid.shape[0]
    Z = np.empty((k * A, 5))
    Z[:, :4] = np.repeat(np.asarray(avg, dtype=np.float64), A, axis=0)
    Z[:, 4] = np.tile(grid, k)
    return features_batch(rmap, Z).reshape(k, A, rmap.D)


def _h_from_cached(
    w: np.ndarray, phi: np.ndarray, feat_grid: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Hyperplane normal from cached features, with fresh greedy actions.

    feat_grid is the (k, A, D) feature tensor of the averaging states; the
    greedy action at each averaging state is re-evaluated under w.
    """
    qv = feat_grid @ w
    mu_idx = np.argmin(qv, axis=1)
    sel = feat_grid[np.arange(feat_grid.shape[0]), mu_idx]
    return phi - alpha * sel.mean(axis=0), mu_idx


def build_h(
    rmap: RffMap,
    z_n: StateAction,
    avg: AveragingStates,
    mu_actions: Sequence[float],
    alpha: float,
) -> np.ndarray:
    """h = phi(z_n) - (alpha / N_av) * sum_j phi(s_j_av, mu_j)."""
    if len(avg) == 0:
        raise ValueError("averaging states must be nonempty")
    if len(mu_actions) != len(avg):
        raise ValueError("one action per averaging state required")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    Z = np.empty((len(avg), 5))
    Z[:, :4] = np.asarray(avg, dtype=np.float64)
    Z[:, 4] = np.asarray(mu_actions, dtype=np.float64)
    return features(rmap, z_n) - alpha * features_batch(rmap, Z).mean(axis=0)


def q_update(q: QFunction, h: np.ndarray, g_target: float, eta: float) -> QFunction:
    """Steepest-descent step on (1/2)(w^T h - g)^2: w <- w - eta (w^T h - g) h."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    resid = float(q.w @ h) - g_target
    return QFunction(q.w - eta * resid * h)


@dataclass(frozen=True)
class ReplayConfig:
    """Prioritized experience-replay settings.

    With reevaluate_mu, replayed updates rebuild h from the greedy actions
    of the *current* weights at the stored averaging states; otherwise the
    actions frozen at storage time are kept, which makes each replayed
    update a plain SGD step on a fixed (h, g) pair.
    """

    capacity: int = 500
    per_step: int = 5
    exponent: float = 0.6
    min_weight: float = 1e-6
    reevaluate_mu: bool = False
    eta_scale: float = 1.0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if self.per_step < 0:
            raise ValueError(f"per_step must be >= 0, got {self.per_step}")
        if self.exponent < 0:
            raise ValueError(f"exponent must be >= 0, got {self.exponent}")
        if not 0.0 < self.eta_scale <= 1.0:
            raise ValueError(f"eta_scale must lie in (0, 1], got {self.eta_scale}")


@dataclass
class ReplayRecord:
    """One stored transition: state, action, one-step loss, averaging states.

    phi and feat_grid cache the (frozen) features of z = (s, a) and of the
    averaging states x action grid; they are filled lazily when absent.
    mu_actions holds the greedy actions at the averaging states as of
    storage time, h the hyperplane normal built from them.
    """

    s: StateVector
    a: float
    g: float
    avg: AveragingStates
    priority: float = 0.0
    phi: Optional[np.ndarray] = None
    feat_grid: Optional[np.ndarray] = None
    mu_actions: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.priority < 0:
            raise ValueError(f"priority must be >= 0, got {self.priority}")


class ReplayBuffer:
    """Bounded FIFO of replay records with priority-proportional sampling."""

    def __init__(self, cfg: ReplayConfig = ReplayConfig()):
        self.cfg = cfg
        self._records: list[ReplayRecord] = []
        self._prio = np.zeros(cfg.capacity)
        self._pos = 0

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i: int) -> ReplayRecord:
        return self._records[i]

    def add(self, record: ReplayRecord) -> None:
        """Insert with maximal current priority (1.0 into an empty buffer)."""
        record.priority = float(self._prio[: len(self._records)].max()) if self._records else 1.0
        if len(self._records) < self.cfg.capacity:
            self._records.append(record)
            self._prio[len(self._records) - 1] = record.priority
        else:
            self._records[self._pos] = record
            self._prio[self._pos] = record.priority
            self._pos = (self._pos + 1) % self.cfg.capacity

    def set_priority(self, i: int, priority: float) -> None:
        self._records[i].priority = float(priority)
        self._prio[i] = priority

    def sample_indices(self, rng: np.random.Generator) -> np.ndarray:
        """per_step indices, with replacement, P(i) ~ priority^exponent + eps."""
        n = len(self._records)
        weights = self._prio[:n] ** self.cfg.exponent + self.cfg.min_weight
        return rng.choice(n, size=self.cfg.per_step, replace=True, p=weights / weights.sum())


def replay_pass(
    q: QFunction,
    buffer: ReplayBuffer,
    rmap: RffMap,
    grid,
    alpha: float,
    eta: float,
    rng: np.random.Generator,
) -> QFunction:
    """Re-apply the evaluation update to sampled records; no-op when empty.

    Depending on the buffer's reevaluate_mu setting, the hyperplane normal
    is rebuilt from the current weights' greedy actions at the stored
    averaging states, or taken as frozen at storage time. The record's
    priority becomes the magnitude of the residual it produced.
    """
    if len(buffer) == 0 or buffer.cfg.per_step == 0:
        return q
    g = validate_grid(grid)
    eta = eta * buffer.cfg.eta_scale
    w = q.w.copy()
    for i in buffer.sample_indices(rng):
        rec = buffer[int(i)]
        if rec.phi is None:
            rec.phi = features(rmap, StateAction(rec.s, rec.a))
        if rec.feat_grid is None:
            rec.feat_grid = _avg_grid_features(rmap, rec.avg, g)
        if buffer.cfg.reevaluate_mu:
            h, _ = _h_from_cached(w, rec.phi, rec.feat_grid, alpha)
        else:
            if rec.h is None:
                if rec.mu_actions is None:
                    rec.h, mu_idx = _h_from_cached(w, rec.phi, rec.feat_grid, alpha)
                    rec.mu_actions = g[mu_idx]
                else:
                    rec.h = build_h(
                        rmap, StateAction(rec.s, rec.a), rec.avg, rec.mu_actions, alpha
                    )
            h = rec.h
        resid = float(w @ h) - rec.g
        w -= eta * resid * h
        buffer.set_priority(int(i), abs(resid))
    return QFunction(w)


@dataclass
class NonexpansivityReport:
    passed: bool
    worst_ratio: float
    alpha_bound: float
    worst_direction_ratio: float


def bellman_mu_rff(
    w: np.ndarray, w_g: np.ndarray, F_av: np.ndarray, psi: np.ndarray, alpha: float
) -> np.ndarray:
    """Policy-specific Bellman map in feature coordinates.

    T(w) = w_g + alpha * sum_j (w^T phi_j_av) * psi, with every psi_j equal
    to the common vector psi.
    """
    return w_g + alpha * (F_av @ w).sum() * psi


def check_nonexpansive(
    rmap: RffMap,
    avg: AveragingStates,
    mu_actions: Sequence[float],
    alpha: float,
    z_n: StateAction,
    trials: int,
    rng: np.random.Generator,
) -> NonexpansivityReport:
    """Empirical nonexpansivity check of the policy-specific Bellman map.

    psi_j is realized as the minimum-norm element of the hyperplane
    {psi : psi(z_n) = 1/N_av}, i.e. phi(z_n) / (N_av ||phi(z_n)||^2), the
    same vector for every j. The alpha bound uses the realized kernel
    matrices; random weight pairs then probe the contraction ratio, and the
    analytic worst-case direction (the summed averaging features) is probed
    as well.
    """
    n_av = len(avg)
    if n_av == 0 or len(mu_actions) != n_av:
        raise ValueError("need nonempty averaging states with matching actions")
    phi_n = features(rmap, z_n)
    psi = phi_n / (n_av * float(phi_n @ phi_n))
    Z = np.empty((n_av, 5))
    Z[:, :4] = np.asarray(avg, dtype=np.float64)
    Z[:, 4] = np.asarray(mu_actions, dtype=np.float64)
    F_av = features_batch(rmap, Z)

    Psi = np.tile(psi, (n_av, 1))
    K_psi = Psi @ Psi.T
    K_av = F_av @ F_av.T
    alpha_bound = 1.0 / np.sqrt(
        np.linalg.norm(K_psi, 2) * np.linalg.norm(K_av, 2)
    )

    def ratio(delta: np.ndarray) -> float:
        t_delta = alpha * (F_av @ delta).sum() * psi
        return float(np.linalg.norm(t_delta) / np.linalg.norm(delta))

    worst = 0.0
    for _ in range(trials):
        delta = rng.standard_normal(rmap.D) - rng.standard_normal(rmap.D)
        worst = max(worst, ratio(delta))
    direction = F_av.sum(axis=0)
    worst_direction = ratio(direction) if float(direction @ direction) > 0 else 0.0
    worst = max(worst, worst_direction)
    passed = alpha <= alpha_bound * (1 + 1e-12) and worst <= 1.0 + 1e-9
    return NonexpansivityReport(passed, worst, float(alpha_bound), worst_direction)


class ApiAgent:
    """Online policy-iteration agent driving an LMP filter.

    Per arriving pair: compute the state, pick p greedily (constant initial
    policy at the first step), update the filter, form averaging states and
    the one-step loss, replay stored records, then apply the evaluation
    update and store the new record.
    """

    def __init__(
        self,
        L: int,
        rho: float,
        grid,
        feature_cfg: FeatureConfig,
        rmap: RffMap,
        *,
        alpha: float = 0.75,
        eta: float = 0.5,
        n_av: int = 10,
        replay: ReplayConfig = ReplayConfig(),
        rng: Optional[np.random.Generator] = None,
        initial_p: float = 2.0,
        theta0: Optional[np.ndarray] = None,
        explore_eps: float = 0.0,
        explore_eps_end: float = 0.0,
        explore_decay_steps: int = 0,
        tie_tol: float = 0.0,
    ):
        self.grid = validate_grid(grid)
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        if n_av < 1:
            raise ValueError(f"n_av must be positive, got {n_av}")
        matches = np.nonzero(self.grid == initial_p)[0]
        if matches.size == 0:
            raise ValueError(f"initial_p={initial_p} is not a grid action")
        self._initial_idx = int(matches[0])
        self.cfg = feature_cfg
        self.rmap = rmap
        self.alpha = alpha
        self.eta = eta
        self.n_av = n_av
        self.rng = rng if rng is not None else np.random.default_rng()
        self.filter = FilterState(
            np.zeros(L) if theta0 is None else np.asarray(theta0, dtype=np.float64),
            rho,
        )
        if not 0.0 <= explore_eps < 1.0 or not 0.0 <= explore_eps_end <= explore_eps:
            raise ValueError("need 0 <= explore_eps_end <= explore_eps < 1")
        self.explore_eps = explore_eps
        self.explore_eps_end = explore_eps_end
        self.explore_decay_steps = explore_decay_steps
        if tie_tol < 0:
            raise ValueError(f"tie_tol must be >= 0, got {tie_tol}")
        self.tie_tol = tie_tol
        self.window = DataWindow(feature_cfg.M_av, L)
        self.q = QFunction(np.zeros(rmap.D))
        self.buffer = ReplayBuffer(replay)
        self.n = 0
        self._prev_theta: Optional[np.ndarray] = None
        self._prev_s4 = 0.0
        # last-step context, for diagnostics and the runtime nonexpansivity check
        self.last_state: Optional[StateVector] = None
        self.last_action: Optional[float] = None
        self.last_g: Optional[float] = None
        self.last_avg: Optional[AveragingStates] = None
        self.last_mu_actions: Optional[np.ndarray] = None

    @property
    def theta(self) -> np.ndarray:
        return self.filter.theta

    def _explore_rate(self) -> float:
        if self.explore_eps == 0.0:
            return 0.0
        if self.explore_decay_steps <= 0 or self.n >= self.explore_decay_steps:
            return self.explore_eps_end
        frac = self.n / self.explore_decay_steps
        return self.explore_eps + frac * (self.explore_eps_end - self.explore_eps)

    def step(self, x: np.ndarray, y: float) -> float:
        """Consume one pair, return the p used for the filter update."""
        s = compute_state(
            self.window,
            self.filter.theta,
            x,
            y,
            self._prev_s4,
            self.cfg,
            self.filter.rho,
            theta_prev=self._prev_theta,
        )
        F_s = features_batch(self.rmap, state_grid_points(s, self.grid))
        if self.n == 0:
            a_idx = self._initial_idx
            s = s._replace(s4=initial_s4(float(self.grid[a_idx]), s.s1, s.s3))
            F_s = features_batch(self.rmap, state_grid_points(s, self.grid))
        else:
            a_idx = greedy_index(F_s @ self.q.w, self.tie_tol)
            eps = self._explore_rate()
            if eps > 0.0 and self.rng.random() < eps:
                a_idx = int(self.rng.integers(len(self.grid)))
        a = float(self.grid[a_idx])
        phi_n = F_s[a_idx]

        prev_theta = self.filter.theta
        self.filter = lmp_step(self.filter, x, y, a)
        self.window.append(x, y)

        avg = generate_avg_states(self.window, self.filter.theta, s, self.n_av, self.cfg)
        feat_grid = _avg_grid_features(self.rmap, avg, self.grid)
        g = one_step_loss(self.window, self.filter.theta, self.cfg)

        self.q = replay_pass(
            self.q, self.buffer, self.rmap, self.grid, self.alpha, self.eta, self.rng
        )
        h, mu_idx = _h_from_cached(self.q.w, phi_n, feat_grid, self.alpha)
        self.q = q_update(self.q, h, g, self.eta)
        self.buffer.add(
            ReplayRecord(
                s=s,
                a=a,
                g=g,
                avg=avg,
                phi=phi_n,
                feat_grid=feat_grid,
                mu_actions=self.grid[mu_idx],
                h=h,
            )
        )

        self.last_state = s
        self.last_action = a
        self.last_g = g
        self.last_avg = avg
        self.last_mu_actions = self.grid[mu_idx]
        self._prev_theta = prev_theta
        self._prev_s4 = s.s4
        self.n += 1
        return a

    def check_nonexpansive(
        self, trials: int = 1000, rng: Optional[np.random.Generator] = None
    ) -> NonexpansivityReport:
        """Run the Theorem-style check on the most recent step's quantities."""
        if self.last_avg is None:
            raise ValueError("agent has not taken a step yet")
        return check_nonexpansive(
            self.rmap,
            self.last_avg,
            self.last_mu_actions,
            self.alpha,
            StateAction(self.last_state, self.last_action),
            trials,
            rng if rng is not None else self.rng,
        )
