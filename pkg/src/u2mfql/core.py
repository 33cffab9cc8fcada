"""Grids, simplex distributions, Q-tables, learning rates, policies and distances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SUM_TOL = 1e-9
RENORM_TOL = 1e-12
FLUSH_TINY = 1e-300  # masses below this are set to 0 (avoids subnormal slowdowns)


def _uniform_points(lo: float, hi: float, step: float) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise ValueError("grid bounds and step must be finite")
    if step <= 0:
        raise ValueError(f"grid step must be positive, got {step}")
    if hi < lo:
        raise ValueError(f"empty grid range [{lo}, {hi}]")
    span = (hi - lo) / step
    n = int(round(span))
    if abs(span - n) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"range [{lo}, {hi}] is not a multiple of step {step}")
    # linspace pins both end points exactly
    return np.linspace(lo, hi, n + 1)


@dataclass(frozen=True)
class StateGrid:
    """Uniform centroids on [center - half_width, center + half_width]."""

    center: float
    half_width: float
    step: float
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")
        pts = _uniform_points(self.center - self.half_width, self.center + self.half_width, self.step)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ActionGrid:
    """Uniform action values on [minimum, maximum]."""

    minimum: float = -1.0
    maximum: float = 1.0
    step: float = 0.1
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = _uniform_points(self.minimum, self.maximum, self.step)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass
class QTable:
    """Action values with per-cell visit counts."""

    values: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        if n_states < 1 or n_actions < 1:
            raise ValueError("QTable dimensions must be positive")
        return cls(np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions), dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy())


@dataclass(frozen=True)
class RateSchedule:
    omega_q: float
    omega_mu: float

    def __post_init__(self):
        if not 0.5 < self.omega_q < 1.0:
            raise ValueError(f"omega_q must lie in (0.5, 1), got {self.omega_q}")
        if not self.omega_mu > 0:
            raise ValueError(f"omega_mu must be positive, got {self.omega_mu}")

    def rho_q(self, visit_count: int) -> float:
        return rate_q(visit_count, self.omega_q)

    def rho_mu(self, episode: int) -> float:
        return rate_mu(episode, self.omega_mu)


@dataclass(frozen=True)
class Discount:
    """Continuous discount rate beta sampled at time step dt."""

    beta: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive so that gamma < 1")

    @property
    def gamma(self) -> float:
        return math.exp(-self.beta * self.dt)


def _values(q) -> np.ndarray:
    return q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)


def one_hot(state_index: int, n_states: int) -> np.ndarray:
    if not 0 <= state_index < n_states:
        raise ValueError(f"state index {state_index} out of range for {n_states} states")
    mu = np.zeros(n_states)
    mu[state_index] = 1.0
    return mu


def uniform_distribution(n_states: int) -> np.ndarray:
    return np.full(n_states, 1.0 / n_states)


def renormalize(mu: np.ndarray) -> np.ndarray:
    """Rescale only when the mass has drifted by more than RENORM_TOL."""
    s = mu.sum()
    if abs(s - 1.0) > RENORM_TOL:
        return mu / s
    return mu


def nudge_toward(mu: np.ndarray, x: int, rho: float) -> np.ndarray:
    """mu + rho (delta_x - mu), with tiny masses flushed to 0, then renormalized."""
    out = mu + rho * (one_hot(x, len(mu)) - mu)
    out[out < FLUSH_TINY] = 0.0
    return renormalize(out)


def as_distribution(mass, n_states: int | None = None) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    mu = np.asarray(mass, dtype=float)
    if mu.ndim != 1:
        raise ValueError("a distribution must be one-dimensional")
    if n_states is not None and len(mu) != n_states:
        raise ValueError(f"distribution has length {len(mu)}, expected {n_states}")
    if not np.all(np.isfinite(mu)):
        raise ValueError("distribution has non-finite entries")
    if mu.min() < -RENORM_TOL or mu.max() > 1.0 + RENORM_TOL:
        raise ValueError("distribution entries must lie in [0, 1]")
    if abs(mu.sum() - 1.0) > SUM_TOL:
        raise ValueError(f"distribution sums to {mu.sum()!r}")
    return renormalize(mu)


def distribution_mean(mu, grid: StateGrid) -> float:
    mu = np.asarray(mu, dtype=float)
    if len(mu) != len(grid.points):
        raise ValueError(f"distribution length {len(mu)} does not match grid size {len(grid.points)}")
    return float(np.dot(grid.points, mu))


def rate_q(visit_count: int, omega_q: float) -> float:
    if visit_count < 0:
        raise ValueError("visit count must be nonnegative")
    return (1.0 + visit_count) ** (-omega_q)


def rate_mu(episode: int, omega_mu: float) -> float:
    if episode < 0:
        raise ValueError("episode must be nonnegative")
    return (1.0 + episode) ** (-omega_mu)


def greedy_action(q, state_index: int) -> int:
    # np.argmin returns the first minimiser, i.e. the lowest index on ties
    return int(np.argmin(_values(q)[state_index]))


def epsilon_greedy(q, state_index: int, epsilon: float, rng: np.random.Generator) -> int:
    """Two uniforms per call: exploration coin, then the random index (always drawn)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    row = _values(q)[state_index]
    u_explore = rng.random()
    u_index = rng.random()
    if u_explore < epsilon:
        return min(int(u_index * len(row)), len(row) - 1)
    return int(np.argmin(row))


def total_variation(mu1, mu2) -> float:
    """Plain L1 distance (twice the usual total variation)."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if mu1.shape != mu2.shape:
        raise ValueError("distributions have different lengths")
    return float(np.abs(mu1 - mu2).sum())


def norm_11(q1, q2) -> float:
    v1, v2 = _values(q1), _values(q2)
    if v1.shape != v2.shape:
        raise ValueError("tables have different shapes")
    return float(np.abs(v1 - v2).sum())


def project_to_grid(x: float, grid: StateGrid) -> int:
    pts = grid.points
    if x <= pts[0]:
        return 0
    if x >= pts[-1]:
        return len(pts) - 1
    j = min(int(math.floor((x - pts[0]) / grid.step)), len(pts) - 2)
    # correct for rounding in the division
    while j > 0 and x < pts[j]:
        j -= 1
    while j < len(pts) - 2 and x > pts[j + 1]:
        j += 1
    lower = x - pts[j]
    upper = pts[j + 1] - x
    if upper < lower - 1e-12 * grid.step:
        return j + 1
    return j


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Independent stream for one (run seed, episode) pair."""
    return np.random.default_rng([int(seed), int(episode)])


def sample_index(cdf: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds u."""
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)
