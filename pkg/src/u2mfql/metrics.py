"""Error metrics of learned controls and distributions against the analytic solution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActionGrid, StateGrid, distribution_mean
from .envs import LQParams
from .oracle import LQSolution, optimal_control, solve, stationary_state_distribution, support_99

METRIC_NAMES = ("mse_control", "mse_mean", "tv_mu", "q11")


@dataclass
class RunMetrics:
    episodes: list = field(default_factory=list)
    mse_control_by_episode: list = field(default_factory=list)
    mse_mean_by_episode: list = field(default_factory=list)
    tv_by_episode: list = field(default_factory=list)
    q11_by_episode: list = field(default_factory=list)

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "mse_control": np.asarray(self.mse_control_by_episode, dtype=float),
            "mse_mean": np.asarray(self.mse_mean_by_episode, dtype=float),
            "tv_mu": np.asarray(self.tv_by_episode, dtype=float),
            "q11": np.asarray(self.q11_by_episode, dtype=float),
        }

    def __len__(self) -> int:
        return len(self.episodes)


def mse_control(learned_control, oracle_sol: LQSolution, support, grid: StateGrid) -> float:
    idx = np.asarray(support, dtype=int)
    if idx.size == 0:
        raise ValueError("support must be nonempty")
    learned = np.asarray(learned_control, dtype=float)[idx]
    target = optimal_control(oracle_sol, np.asarray(grid.points)[idx])
    return float(np.mean((learned - target) ** 2))


def mse_mean(learned_means, oracle_m: float) -> float:
    m = np.asarray(learned_means, dtype=float)
    if m.size == 0:
        raise ValueError("need at least one run")
    return float(np.mean((m - oracle_m) ** 2))


def aggregate_runs(per_run) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pointwise mean and population std of each metric over runs.

    Runs that stopped early are aligned on their common prefix.
    """
    runs = list(per_run)
    if not runs:
        raise ValueError("no runs to aggregate")
    n = min(len(r) for r in runs)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in METRIC_NAMES:
        stack = np.stack([r.columns()[name][:n] for r in runs])
        out[name] = (stack.mean(axis=0), stack.std(axis=0))
    out["episode"] = (np.asarray(runs[0].episodes[:n]), np.zeros(n))
    return out


@dataclass(frozen=True)
class Benchmark:
    """Oracle quantities needed to score a run in one regime."""

    solution: LQSolution
    support: np.ndarray
    stationary: np.ndarray

    @classmethod
    def for_mode(cls, params: LQParams, grid: StateGrid, mode: str) -> "Benchmark":
        sol = solve(params, mode)
        dist = stationary_state_distribution(sol, params, grid)
        return cls(sol, support_99(dist, grid), dist)


class MetricsRecorder:
    """Training callback that samples the four traces every `stride` episodes.

    Rows are taken at 1-based episode numbers divisible by the stride and at the
    final episode.
    """

    def __init__(self, bench: Benchmark, grid: StateGrid, agrid: ActionGrid, stride: int, n_episodes: int):
        if stride < 1:
            raise ValueError("metrics stride must be at least 1")
        self.bench = bench
        self.grid = grid
        self.agrid = agrid
        self.stride = stride
        self.n_episodes = n_episodes
        self.metrics = RunMetrics()

    def record(self, state) -> None:
        q = state.q.values
        control = np.asarray(self.agrid.points)[np.argmin(q, axis=1)]
        m_T = distribution_mean(state.mu_by_step[-1], self.grid)
        r = self.metrics
        r.episodes.append(state.episode)
        r.mse_control_by_episode.append(mse_control(control, self.bench.solution, self.bench.support, self.grid))
        r.mse_mean_by_episode.append(mse_mean([m_T], self.bench.solution.m))
        r.tv_by_episode.append(state.history.tv[-1])
        r.q11_by_episode.append(state.history.q11[-1])

    def __call__(self, state) -> None:
        if state.episode % self.stride == 0 or state.episode == self.n_episodes:
            self.record(state)

    def finish(self, state) -> None:
        """Record the last episode if training stopped between strides."""
        if not self.metrics.episodes or self.metrics.episodes[-1] != state.episode:
            self.record(state)


def quartile_trend(trace) -> tuple[float, float]:
    """Means of the first and last quarter of a trace."""
    x = np.asarray(trace, dtype=float)
    n = max(1, len(x) // 4)
    return float(x[:n].mean()), float(x[-n:].mean())
