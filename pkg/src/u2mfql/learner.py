"""Episodic two-timescale mean-field Q-learning.

The agent keeps a Q-table and one distribution estimate mu_n per time index.  Each
episode starts from a draw of mu_T, and at every step the agent nudges mu_n toward
its current state, acts epsilon-greedily, and applies an asynchronous Q update.
Whether the limit is the game equilibrium or the control optimum is decided only
by the two rate exponents: the one with the faster-decaying rate is the slow track.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ActionGrid,
    Discount,
    QTable,
    episode_rng,
    epsilon_greedy,
    norm_11,
    nudge_toward,
    rate_mu,
    rate_q,
    sample_index,
    total_variation,
    uniform_distribution,
)
from .errors import NumericalError

log = logging.getLogger(__name__)

MFG_OMEGAS = (0.55, 0.85)
MFC_OMEGAS = (0.65, 0.15)
DEFAULT_WINDOW = 10_000


@dataclass
class TrainConfig:
    n_episodes: int = 80_000
    steps_per_episode: int = 2000
    epsilon: float = 0.15
    omega_q: float | None = None
    omega_mu: float | None = None
    tol_mu: float = 0.0
    tol_q: float = 0.0
    seed: int = 0
    mode_label: str = "mfg"
    trailing_window: int = DEFAULT_WINDOW
    epsilon_final: float | None = None  # linear decay target, off when None
    epsilon_decay_episodes: int = 0
    use_compiled: bool = True

    def __post_init__(self):
        if self.mode_label not in ("mfg", "mfc", "custom"):
            raise ValueError(f"mode_label must be mfg, mfc or custom, got {self.mode_label!r}")
        defaults = MFC_OMEGAS if self.mode_label == "mfc" else MFG_OMEGAS
        if self.omega_q is None:
            self.omega_q = defaults[0]
        if self.omega_mu is None:
            self.omega_mu = defaults[1]
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be at least 1")
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be at least 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.epsilon_final is not None and not 0.0 <= self.epsilon_final <= 1.0:
            raise ValueError("epsilon_final must lie in [0, 1]")
        if self.tol_mu < 0 or self.tol_q < 0:
            raise ValueError("tolerances must be nonnegative")
        if not self.omega_q > 0 or not self.omega_mu > 0:
            raise ValueError("rate exponents must be positive")
        if self.trailing_window < 1:
            raise ValueError("trailing_window must be at least 1")

    def epsilon_at(self, episode: int) -> float:
        if self.epsilon_final is None or self.epsilon_decay_episodes <= 0:
            return self.epsilon
        frac = min(1.0, episode / self.epsilon_decay_episodes)
        return self.epsilon + frac * (self.epsilon_final - self.epsilon)

    @property
    def regime(self) -> str:
        """'mfg' when the distribution is the slow track, 'mfc' otherwise."""
        return "mfg" if self.omega_mu > self.omega_q else "mfc"


@dataclass
class History:
    tv: list = field(default_factory=list)
    q11: list = field(default_factory=list)
    mu_T: deque = field(default_factory=deque)
    control: deque = field(default_factory=deque)  # greedy action indices
    value: deque = field(default_factory=deque)

    @classmethod
    def with_window(cls, window: int) -> "History":
        return cls(mu_T=deque(maxlen=window), control=deque(maxlen=window), value=deque(maxlen=window))


@dataclass
class TrainState:
    q: QTable
    mu_by_step: np.ndarray  # (T + 1, X)
    episode: int
    seed: int
    history: History

    @property
    def rng(self) -> np.random.Generator:
        """Stream for the next episode."""
        return episode_rng(self.seed, self.episode)


def init_train(config: TrainConfig, n_states: int, n_actions: int) -> TrainState:
    if n_states < 1 or n_actions < 1:
        raise ValueError("dimensions must be positive")
    mu = np.tile(uniform_distribution(n_states), (config.steps_per_episode + 1, 1))
    return TrainState(
        q=QTable.zeros(n_states, n_actions),
        mu_by_step=mu,
        episode=0,
        seed=int(config.seed),
        history=History.with_window(config.trailing_window),
    )


def _gamma(discount) -> float:
    return discount.gamma if isinstance(discount, Discount) else float(discount)


def _episode_python(state: TrainState, env, config: TrainConfig, gamma: float, rho_mu: float, eps: float) -> None:
    rng = state.rng
    q, mu = state.q, state.mu_by_step
    T = config.steps_per_episode
    x = sample_index(np.cumsum(mu[T]), rng.random())
    for n in range(T):
        mu[n] = nudge_toward(mu[n], x, rho_mu)
        a = epsilon_greedy(q, x, eps, rng)
        out = env.step(x, a, mu[n], rng)
        y = out.next_state_index
        q.visits[x, a] += 1
        rho = rate_q(int(q.visits[x, a]), config.omega_q)
        q.values[x, a] += rho * (out.cost + gamma * q.values[y].min() - q.values[x, a])
        x = y
    mu[T] = nudge_toward(mu[T], x, rho_mu)


def _episode_compiled(state: TrainState, model, config: TrainConfig, gamma: float, rho_mu: float, eps: float) -> None:
    from ._kernel import run_episode_kernel

    u = state.rng.random(1 + 3 * config.steps_per_episode)
    run_episode_kernel(
        state.q.values, state.q.visits, state.mu_by_step, u, rho_mu, float(config.omega_q), gamma, eps,
        model.cdf, model.phi, model.base, model.lin, model.quad,
    )


def run_episode(state: TrainState, env, config: TrainConfig, grids=None, discount=None) -> TrainState:
    """Advance one episode in place and record its increments.

    The environment is queried with (X_n, A_n, mu_n); the learner never sees the
    population itself.  ``grids`` is accepted for interface symmetry and unused.
    """
    if discount is None:
        raise ValueError("a discount (Discount or gamma) is required")
    gamma = _gamma(discount)
    k = state.episode
    rho_mu = rate_mu(k, config.omega_mu)
    eps = config.epsilon_at(k)
    q_prev = state.q.values.copy()
    mu_T_prev = state.mu_by_step[-1].copy()

    model = env.tabular_model() if config.use_compiled and hasattr(env, "tabular_model") else None
    if model is not None:
        _episode_compiled(state, model, config, gamma, rho_mu, eps)
    else:
        _episode_python(state, env, config, gamma, rho_mu, eps)

    if not (np.all(np.isfinite(state.q.values)) and np.all(np.isfinite(state.mu_by_step))):
        raise NumericalError(f"non-finite value in Q or mu after episode {k}", episode=k)
    h = state.history
    h.tv.append(total_variation(mu_T_prev, state.mu_by_step[-1]))
    h.q11.append(norm_11(q_prev, state.q.values))
    h.mu_T.append(state.mu_by_step[-1].copy())
    h.control.append(np.argmin(state.q.values, axis=1))
    h.value.append(state.q.values.min(axis=1))
    state.episode = k + 1
    return state


def timescale_check(state: TrainState, config: TrainConfig) -> dict:
    """Compare the two rates at the most visited cell after the last episode."""
    visits = state.q.visits
    x, a = np.unravel_index(int(np.argmax(visits)), visits.shape)
    rq = rate_q(int(visits[x, a]), config.omega_q)
    rm = rate_mu(max(state.episode - 1, 0), config.omega_mu)
    return {"state": int(x), "action": int(a), "visits": int(visits[x, a]), "rho_q": rq, "rho_mu": rm,
            "mu_slower": rm < rq}


def train(env, config: TrainConfig, grids=None, discount=None, callback=None, state: TrainState | None = None):
    """Run episodes until both stopping tests hold or the budget is spent.

    Returns (state, reason) with reason 'converged' or 'exhausted'.  ``callback``
    is called as callback(state) after every episode.  Passing a restored
    ``state`` resumes from its episode counter.
    """
    if state is None:
        state = init_train(config, env.n_states, env.n_actions)
    reason = "exhausted"
    while state.episode < config.n_episodes:
        run_episode(state, env, config, grids, discount)
        if callback is not None:
            callback(state)
        if state.history.tv[-1] <= config.tol_mu and state.history.q11[-1] < config.tol_q:
            reason = "converged"
            break
    check = timescale_check(state, config)
    log.info("stopped after %d episodes (%s); rates at most visited cell: %s", state.episode, reason, check)
    return state, reason


def extract_control(q, agrid: ActionGrid) -> np.ndarray:
    values = q.values if isinstance(q, QTable) else np.asarray(q)
    return np.asarray(agrid.points)[np.argmin(values, axis=1)]


def extract_value(q) -> np.ndarray:
    values = q.values if isinstance(q, QTable) else np.asarray(q)
    return values.min(axis=1)


def learned_distribution(state: TrainState) -> np.ndarray:
    return state.mu_by_step[-1].copy()


def trailing_average(snapshots) -> np.ndarray:
    """Mean of a sequence of equally shaped snapshots."""
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("no snapshots to average")
    return np.mean(np.stack(snaps), axis=0)


def trailing_summary(state: TrainState, agrid: ActionGrid) -> dict:
    """Trailing-window averages of mu_T, greedy control values and row minima."""
    h = state.history
    controls = np.asarray(agrid.points)[np.stack(list(h.control))]
    return {
        "mu": trailing_average(h.mu_T),
        "control": controls.mean(axis=0),
        "value": trailing_average(h.value),
    }


__all__ = [
    "TrainConfig",
    "TrainState",
    "History",
    "init_train",
    "run_episode",
    "train",
    "extract_control",
    "extract_value",
    "learned_distribution",
    "trailing_average",
    "trailing_summary",
    "timescale_check",
    "MFG_OMEGAS",
    "MFC_OMEGAS",
]
