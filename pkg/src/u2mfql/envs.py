"""Environments: the discretised linear-quadratic mean-field model and explicit finite MDPs.

An environment receives (state, action, population estimate) and answers with the
next state and the one-step cost.  The learner only talks to environments through
``step``; environments whose kernel ignores the population and whose cost depends on
it through a single linear statistic can additionally expose a ``TabularModel`` so
the compiled episode loop can be used.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .core import ActionGrid, StateGrid, distribution_mean, sample_index
from .errors import ModelError

ROW_TOL = 1e-9
TRANSITION_VARIANTS = ("euler", "literal")


@dataclass(frozen=True)
class LQParams:
    c1: float = 0.25
    c2: float = 1.5
    c3: float = 0.5
    c4: float = 0.6
    c5: float = 5.0
    beta: float = 1.0
    sigma: float = 0.3
    dt: float = 0.01

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4", "c5", "beta", "sigma", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("c1", "c3", "c5"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("beta", "sigma", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class EnvOutcome(NamedTuple):
    next_state_index: int
    cost: float


@dataclass(frozen=True)
class TabularModel:
    """Population-independent kernel with cost base + lin*s + quad*s**2, s = phi . mu."""

    cdf: np.ndarray  # (X, A, X) cumulative rows, last entry forced to 1
    phi: np.ndarray  # (X,)
    base: np.ndarray  # (X, A)
    lin: np.ndarray  # (X, A)
    quad: np.ndarray  # (X, A)


def lq_cost(x: float, a: float, m: float, params: LQParams) -> float:
    p = params
    return 0.5 * a * a + p.c1 * (x - p.c2 * m) ** 2 + p.c3 * (x - p.c4) ** 2 + p.c5 * m * m


def gaussian_cell_masses(mean: float, sd: float, points: np.ndarray, step: float) -> np.ndarray:
    """Mass of N(mean, sd^2) on each cell; boundary cells absorb the tails."""
    n = len(points)
    if n == 1:
        return np.ones(1)
    edges = points[:-1] + 0.5 * step
    z = (edges - mean) / sd
    lower = ndtr(z)  # P(Z <= edge)
    upper = ndtr(-z)  # P(Z > edge), accurate in the right tail
    row = np.empty(n)
    row[0] = lower[0]
    row[-1] = upper[-1]
    inner = points[1:-1]
    right = inner >= mean
    by_lower = lower[1:] - lower[:-1]
    by_upper = upper[:-1] - upper[1:]
    row[1:-1] = np.where(right, by_upper, by_lower)
    np.clip(row, 0.0, None, out=row)
    return row


def _drift_mean(x: float, a: float, params: LQParams, variant: str) -> float:
    if variant == "euler":
        return x + a * params.dt
    if variant == "literal":
        return x + a
    raise ValueError(f"unknown transition variant {variant!r}; expected one of {TRANSITION_VARIANTS}")


def lq_transition_row(
    state_index: int, a: float, grid: StateGrid, params: LQParams, variant: str = "euler"
) -> np.ndarray:
    if not 0 <= state_index < len(grid.points):
        raise ValueError(f"state index {state_index} out of range")
    mean = _drift_mean(float(grid.points[state_index]), a, params, variant)
    sd = params.sigma * math.sqrt(params.dt)
    return gaussian_cell_masses(mean, sd, grid.points, grid.step)


def lq_kernel_table(
    grid: StateGrid, agrid: ActionGrid, params: LQParams, variant: str = "euler"
) -> np.ndarray:
    """All transition rows, shape (X, A, X)."""
    table = np.empty((len(grid.points), len(agrid.points), len(grid.points)))
    for i in range(len(grid.points)):
        for j, a in enumerate(agrid.points):
            table[i, j] = lq_transition_row(i, float(a), grid, params, variant)
    return table


def _cdf_rows(kernel: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(kernel, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def env_step(
    state_index: int,
    action_index: int,
    mu,
    grid: StateGrid,
    agrid: ActionGrid,
    params: LQParams,
    rng: np.random.Generator,
    variant: str = "euler",
) -> EnvOutcome:
    x = float(grid.points[state_index])
    a = float(agrid.points[action_index])
    cost = lq_cost(x, a, distribution_mean(mu, grid), params) * params.dt
    row = lq_transition_row(state_index, a, grid, params, variant)
    nxt = sample_index(_cdf_rows(row), rng.random())
    return EnvOutcome(nxt, cost)


class LQEnv:
    """Discretised LQ benchmark with the transition table precomputed."""

    def __init__(self, params: LQParams, grid: StateGrid, agrid: ActionGrid, variant: str = "euler"):
        self.params = params
        self.grid = grid
        self.agrid = agrid
        self.variant = variant
        self.kernel = lq_kernel_table(grid, agrid, params, variant)
        self._cdf = _cdf_rows(self.kernel)
        self._model: TabularModel | None = None

    @property
    def n_states(self) -> int:
        return len(self.grid.points)

    @property
    def n_actions(self) -> int:
        return len(self.agrid.points)

    def step(self, state_index: int, action_index: int, mu, rng: np.random.Generator) -> EnvOutcome:
        x = float(self.grid.points[state_index])
        a = float(self.agrid.points[action_index])
        cost = lq_cost(x, a, distribution_mean(mu, self.grid), self.params) * self.params.dt
        nxt = sample_index(self._cdf[state_index, action_index], rng.random())
        return EnvOutcome(nxt, cost)

    def tabular_model(self) -> TabularModel:
        if self._model is None:
            self._model = self._build_model()
        return self._model

    def _build_model(self) -> TabularModel:
        p = self.params
        x = self.grid.points[:, None]
        a = self.agrid.points[None, :]
        shape = (self.n_states, self.n_actions)
        base = p.dt * (0.5 * a * a + p.c1 * x * x + p.c3 * (x - p.c4) ** 2)
        lin = np.broadcast_to(-2.0 * p.dt * p.c1 * p.c2 * x, shape)
        quad = np.full(shape, p.dt * (p.c1 * p.c2 * p.c2 + p.c5))
        return TabularModel(self._cdf, np.array(self.grid.points), base, np.array(lin), quad)


@dataclass
class FiniteMfMdp:
    """Finite mean-field MDP given by a kernel p(.|x, a, mu) and a cost f(x, a, mu)."""

    n_states: int
    n_actions: int
    kernel: Callable[[int, int, np.ndarray], Sequence[float]]
    cost: Callable[[int, int, np.ndarray], float]
    static_kernel: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def row(self, x: int, a: int, mu) -> np.ndarray:
        row = np.asarray(self.kernel(x, a, np.asarray(mu, dtype=float)), dtype=float)
        if row.shape != (self.n_states,):
            raise ModelError(f"kernel row for ({x}, {a}) has shape {row.shape}")
        if row.min() < -ROW_TOL or abs(row.sum() - 1.0) > ROW_TOL:
            raise ModelError(f"kernel row for ({x}, {a}) is not a probability vector (sum {row.sum()!r})")
        return row

    def kernel_table(self, mu) -> np.ndarray:
        if self.static_kernel and "P" in self._cache:
            return self._cache["P"]
        P = np.empty((self.n_states, self.n_actions, self.n_states))
        for x in range(self.n_states):
            for a in range(self.n_actions):
                P[x, a] = self.row(x, a, mu)
        if self.static_kernel:
            self._cache["P"] = P
        return P

    def cost_table(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        F = np.empty((self.n_states, self.n_actions))
        for x in range(self.n_states):
            for a in range(self.n_actions):
                F[x, a] = float(self.cost(x, a, mu))
        return F

    def tabular_model(self) -> TabularModel | None:
        return None


class TableMdp(FiniteMfMdp):
    """Finite MDP with a population-independent kernel and a cost driven by linear statistics.

    f(x, a, mu) = base[x, a] + sum_j lin[j, x, a] s_j + quad[j, x, a] s_j**2
    with s_j = sum_x phi[j, x] mu(x).
    """

    def __init__(self, kernel, base, phi=None, lin=None, quad=None):
        P = np.array(kernel, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ModelError(f"kernel must have shape (X, A, X), got {P.shape}")
        nx, na, _ = P.shape
        self.P = P
        self.base = np.array(base, dtype=float).reshape(nx, na)
        self.phi = np.zeros((0, nx)) if phi is None else np.array(phi, dtype=float).reshape(-1, nx)
        k = len(self.phi)
        self.lin = np.zeros((k, nx, na)) if lin is None else np.array(lin, dtype=float).reshape(k, nx, na)
        self.quad = np.zeros((k, nx, na)) if quad is None else np.array(quad, dtype=float).reshape(k, nx, na)
        super().__init__(nx, na, self._kernel_row, self._cost_value, static_kernel=True)
        for x in range(nx):
            for a in range(na):
                self.row(x, a, None)

    def _kernel_row(self, x, a, mu):
        return self.P[x, a]

    def statistics(self, mu) -> np.ndarray:
        if len(self.phi) == 0:
            return np.zeros(0)  # no mean-field term; mu may be omitted
        return self.phi @ np.asarray(mu, dtype=float)

    def _cost_value(self, x, a, mu):
        s = self.statistics(mu)
        return self.base[x, a] + float(np.dot(self.lin[:, x, a], s)) + float(np.dot(self.quad[:, x, a], s * s))

    def kernel_table(self, mu) -> np.ndarray:
        return self.P

    def cost_table(self, mu) -> np.ndarray:
        s = self.statistics(mu)
        return self.base + np.tensordot(s, self.lin, axes=1) + np.tensordot(s * s, self.quad, axes=1)

    @property
    def depends_on_mu(self) -> bool:
        return bool(np.any(self.lin != 0) or np.any(self.quad != 0))

    def tabular_model(self) -> TabularModel | None:
        if len(self.phi) > 1:
            return None
        if len(self.phi) == 0:
            phi = np.zeros(self.n_states)
            lin = quad = np.zeros((self.n_states, self.n_actions))
        else:
            phi, lin, quad = self.phi[0], self.lin[0], self.quad[0]
        return TabularModel(_cdf_rows(self.P), phi, self.base, lin, quad)


def finite_env_step(mdp: FiniteMfMdp, x: int, a: int, mu, rng: np.random.Generator) -> EnvOutcome:
    row = mdp.row(x, a, mu)
    cost = float(mdp.cost(x, a, np.asarray(mu, dtype=float)))
    nxt = sample_index(_cdf_rows(row), rng.random())
    return EnvOutcome(nxt, cost)


class FiniteEnv:
    """Learner-facing wrapper around a FiniteMfMdp."""

    def __init__(self, mdp: FiniteMfMdp):
        self.mdp = mdp
        self._model = mdp.tabular_model()

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    def step(self, state_index: int, action_index: int, mu, rng: np.random.Generator) -> EnvOutcome:
        return finite_env_step(self.mdp, state_index, action_index, mu, rng)

    def tabular_model(self) -> TabularModel | None:
        return self._model


def frozen_statistics(mdp: TableMdp, values) -> TableMdp:
    """Same kernel, with the cost evaluated at fixed statistic values (mu-independent)."""
    s = np.asarray(values, dtype=float).reshape(len(mdp.phi))
    base = mdp.base + np.tensordot(s, mdp.lin, axes=1) + np.tensordot(s * s, mdp.quad, axes=1)
    return TableMdp(mdp.P, base)


@dataclass(frozen=True)
class MdpFile:
    """A table MDP plus the iteration settings stored next to it."""

    mdp: TableMdp
    gamma: float
    mu0: np.ndarray
    q0: np.ndarray
    rates: dict  # regime -> {omega_mu, omega_q, scale_mu, scale_q}
    description: str = ""


SHIPPED_MDPS = ("toy_coordination",)


def resolve_mdp_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    if p.exists():
        return p
    if str(path) in SHIPPED_MDPS:
        return Path(str(resources.files("u2mfql") / "data" / f"{path}.json"))
    raise ModelError(f"MDP file not found: {path}")


def parse_mdp(doc: dict) -> MdpFile:
    try:
        kernel = doc["kernel"]
        base = doc["base"]
    except KeyError as exc:
        raise ModelError(f"MDP file lacks required field {exc.args[0]!r}") from None
    try:
        mdp = TableMdp(kernel, base, doc.get("statistics"), doc.get("lin"), doc.get("quad"))
    except ValueError as exc:
        raise ModelError(f"malformed MDP table: {exc}") from exc
    gamma = float(doc.get("gamma", 0.9))
    if not 0.0 <= gamma < 1.0:
        raise ModelError(f"gamma must lie in [0, 1), got {gamma}")
    nx, na = mdp.n_states, mdp.n_actions
    mu0 = np.asarray(doc.get("mu0", np.full(nx, 1.0 / nx)), dtype=float)
    if mu0.shape != (nx,) or mu0.min() < 0 or abs(mu0.sum() - 1.0) > ROW_TOL:
        raise ModelError("mu0 must be a probability vector over the states")
    q0 = np.asarray(doc.get("q0", np.zeros((nx, na))), dtype=float)
    if q0.shape != (nx, na):
        raise ModelError(f"q0 must have shape ({nx}, {na})")
    rates = {}
    for regime, entry in doc.get("rates", {}).items():
        rates[regime] = {
            "omega_mu": float(entry["omega_mu"]),
            "omega_q": float(entry["omega_q"]),
            "scale_mu": float(entry.get("scale_mu", 1.0)),
            "scale_q": float(entry.get("scale_q", 1.0)),
        }
    return MdpFile(mdp, gamma, mu0, q0, rates, str(doc.get("description", "")))


def load_mdp(path: str | os.PathLike) -> MdpFile:
    p = resolve_mdp_path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read MDP file {p}: {exc}") from exc
    return parse_mdp(doc)
