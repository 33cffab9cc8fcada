"""Synchronous two-timescale iterations on finite mean-field MDPs.

Q-tables here are plain (X, A) arrays and distributions are length-X arrays.  The
deterministic scheme uses the exact operators

    T(Q, mu)(x, a) = f(x, a, mu) + gamma sum_x' p(x'|x, a, mu) min_a' Q(x', a') - Q(x, a)
    P(Q, mu)       = mu P^{Q, mu} - mu

and the stochastic scheme replaces them by single-sample estimators.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import one_hot, renormalize, sample_index, uniform_distribution
from .envs import FiniteMfMdp
from .errors import DivergenceError

DIVERGENCE_BOUND = 1e12


@dataclass
class IterState:
    q: np.ndarray
    mu: np.ndarray
    k: int = 0

    def copy(self) -> "IterState":
        return IterState(self.q.copy(), self.mu.copy(), self.k)


@dataclass(frozen=True)
class RatePair:
    rho_mu: Callable[[int], float]
    rho_q: Callable[[int], float]


def power_rates(omega_mu: float, omega_q: float, scale_mu: float = 1.0, scale_q: float = 1.0) -> RatePair:
    """rho(k) = scale * (1 + k)^(-omega) for both tracks."""
    return RatePair(
        rho_mu=lambda k: scale_mu * (1.0 + k) ** (-omega_mu),
        rho_q=lambda k: scale_q * (1.0 + k) ** (-omega_q),
    )


@dataclass
class IterResult:
    state: IterState
    resid_T: np.ndarray
    resid_P: np.ndarray
    n_clipped: int = 0


def greedy_controls(q: np.ndarray) -> np.ndarray:
    return np.argmin(q, axis=1)


def op_T(q, mu, mdp: FiniteMfMdp, gamma: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    P = mdp.kernel_table(mu)
    F = mdp.cost_table(mu)
    return F + gamma * (P @ q.min(axis=1)) - q


def greedy_matrix(q, mu, mdp: FiniteMfMdp) -> np.ndarray:
    P = mdp.kernel_table(mu)
    return P[np.arange(mdp.n_states), greedy_controls(np.asarray(q))]


def op_P(q, mu, mdp: FiniteMfMdp) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return mu @ greedy_matrix(q, mu, mdp) - mu


def softmin(z, inverse_temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    w = np.exp(-inverse_temperature * (z - z.min(axis=-1, keepdims=True)))
    return w / w.sum(axis=-1, keepdims=True)


def op_P_soft(q, mu, mdp: FiniteMfMdp, inverse_temperature: float = 1.0) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    nu = softmin(np.asarray(q, dtype=float), inverse_temperature)
    P = mdp.kernel_table(mu)
    mixed = np.einsum("xa,xay->xy", nu, P)
    return mu @ mixed - mu


def sample_T(q, mu, x: int, a: int, mdp: FiniteMfMdp, gamma: float, rng: np.random.Generator) -> float:
    q = np.asarray(q, dtype=float)
    row = mdp.row(x, a, mu)
    x_next = sample_index(np.cumsum(row), rng.random())
    return float(mdp.cost(x, a, np.asarray(mu, dtype=float))) + gamma * q[x_next].min() - q[x, a]


def sample_P(q, mu, mdp: FiniteMfMdp, rng: np.random.Generator) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    x = sample_index(np.cumsum(mu), rng.random())
    a = int(np.argmin(np.asarray(q)[x]))
    x_next = sample_index(np.cumsum(mdp.row(x, a, mu)), rng.random())
    return one_hot(x_next, mdp.n_states) - mu


def _advance_mu(mu: np.ndarray, step: np.ndarray) -> tuple[np.ndarray, bool]:
    new = mu + step
    clipped = bool(new.min() < 0.0)
    if clipped:
        np.clip(new, 0.0, None, out=new)
        new = new / new.sum()
    return renormalize(new), clipped


def _check_q(q: np.ndarray, k: int, resid_T: list, resid_P: list) -> None:
    if not np.all(np.isfinite(q)) or np.abs(q).max() > DIVERGENCE_BOUND:
        hist = (np.array(resid_T), np.array(resid_P))
        raise DivergenceError(f"Q left the bound {DIVERGENCE_BOUND:g} at iteration {k}", history=hist, k=k)


def iterate_deterministic(
    init: IterState,
    rates: RatePair,
    mdp: FiniteMfMdp,
    gamma: float,
    n_iters: int,
    use_softmin: bool = False,
    inverse_temperature: float = 1.0,
    stop_tol: float | None = None,
) -> IterResult:
    """Coupled exact updates; residuals are recorded at (Q_k, mu_k) before each step."""
    state = init.copy()
    resid_T: list[float] = []
    resid_P: list[float] = []
    n_clipped = 0
    for _ in range(n_iters):
        k = state.k
        T = op_T(state.q, state.mu, mdp, gamma)
        if use_softmin:
            D = op_P_soft(state.q, state.mu, mdp, inverse_temperature)
        else:
            D = op_P(state.q, state.mu, mdp)
        resid_T.append(float(np.abs(T).max()))
        resid_P.append(float(np.abs(D).max()))
        if stop_tol is not None and resid_T[-1] <= stop_tol and resid_P[-1] <= stop_tol:
            break
        state.q = state.q + rates.rho_q(k) * T
        state.mu, clipped = _advance_mu(state.mu, rates.rho_mu(k) * D)
        n_clipped += clipped
        state.k = k + 1
        _check_q(state.q, state.k, resid_T, resid_P)
    return IterResult(state, np.array(resid_T), np.array(resid_P), n_clipped)


def _sweep_T(q, mu, mdp: FiniteMfMdp, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """sample_T for every cell, consuming uniforms in row-major (x, a) order."""
    P = mdp.kernel_table(mu)
    F = mdp.cost_table(mu)
    nx, na = q.shape
    u = rng.random(nx * na).reshape(nx, na)
    cdf = np.cumsum(P, axis=-1)
    nxt = np.minimum((cdf <= u[..., None]).sum(axis=-1), nx - 1)
    return F + gamma * q.min(axis=1)[nxt] - q


def iterate_stochastic(
    init: IterState,
    rates: RatePair,
    mdp: FiniteMfMdp,
    gamma: float,
    n_iters: int,
    rng: np.random.Generator,
) -> IterResult:
    """Synchronous generative-model sweep: one sample_P draw and one sample_T draw per cell.

    Exact residuals are recorded for monitoring.
    """
    state = init.copy()
    resid_T: list[float] = []
    resid_P: list[float] = []
    n_clipped = 0
    for _ in range(n_iters):
        k = state.k
        resid_T.append(float(np.abs(op_T(state.q, state.mu, mdp, gamma)).max()))
        resid_P.append(float(np.abs(op_P(state.q, state.mu, mdp)).max()))
        dP = sample_P(state.q, state.mu, mdp, rng)
        dT = _sweep_T(state.q, state.mu, mdp, gamma, rng)
        state.q = state.q + rates.rho_q(k) * dT
        state.mu, clipped = _advance_mu(state.mu, rates.rho_mu(k) * dP)
        n_clipped += clipped
        state.k = k + 1
        _check_q(state.q, state.k, resid_T, resid_P)
    return IterResult(state, np.array(resid_T), np.array(resid_P), n_clipped)


def value_iteration(mdp: FiniteMfMdp, mu, gamma: float, tol: float = 1e-13, max_iters: int = 1_000_000) -> np.ndarray:
    """Q*_mu for a frozen population distribution."""
    P = mdp.kernel_table(mu)
    F = mdp.cost_table(mu)
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iters):
        new = F + gamma * (P @ q.min(axis=1))
        if np.abs(new - q).max() <= tol * max(1.0, np.abs(new).max()):
            return new
        q = new
    raise DivergenceError("value iteration did not converge")


def best_response_gap(mdp: FiniteMfMdp, mu, gamma: float, alpha) -> float:
    """max_x of V^alpha(x) minus the best value over all deterministic controls, mu frozen.

    Zero (up to rounding) when alpha is a best response to mu from every start state.
    """
    mu = np.asarray(mu, dtype=float)
    V = _policy_value(mdp, tuple(int(a) for a in alpha), mu, gamma)
    best = np.full(mdp.n_states, np.inf)
    for beta in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        best = np.minimum(best, _policy_value(mdp, beta, mu, gamma))
    return float((V - best).max())


def rates_from_dict(entry: dict) -> RatePair:
    """RatePair from a mapping with omega_mu, omega_q and optional scale_mu, scale_q."""
    return power_rates(entry["omega_mu"], entry["omega_q"], entry.get("scale_mu", 1.0), entry.get("scale_q", 1.0))


# ---------------------------------------------------------------------------
# exhaustive check of the Bellman identity for the modified MFC Q-function


@dataclass
class BellmanReport:
    residual: float
    tolerance: float
    q_star: np.ndarray
    alpha_star: tuple  # argmin of Q*
    alpha_j: tuple  # minimiser of J over admissible controls
    mu_star: np.ndarray
    value_residual: float  # max_x |min_a Q*(x, a) - V^{alpha*}(x)|
    self_switch_tv: float  # max_x |mu~ at (x, alpha*(x)) - mu*|_1
    uniform_minimizer: bool  # Q^{alpha*} == Q* cellwise
    excluded: list = field(default_factory=list)
    n_controls: int = 0

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def _policy_matrix(P: np.ndarray, alpha) -> np.ndarray:
    return P[np.arange(P.shape[0]), list(alpha)]


def _limit_static(M: np.ndarray, max_steps: int) -> np.ndarray | None:
    """Limit of M^n via repeated squaring; None if it fails to settle or is not rank one."""
    n_squarings = int(np.ceil(np.log2(max_steps)))
    A = M.copy()
    for _ in range(n_squarings):
        A2 = A @ A
        settled = np.abs(A2 - A).max() < 1e-14
        A = A2
        if settled:
            break
    else:
        return None
    if np.abs(A - A[0]).max() > 1e-10:
        return None  # several closed classes
    return renormalize(A.mean(axis=0))


def _limit_mkv(mdp: FiniteMfMdp, alpha, max_steps: int) -> np.ndarray | None:
    """Population limit of the controlled McKean-Vlasov chain by plain power iteration."""
    limits = []
    starts = [uniform_distribution(mdp.n_states)] + [one_hot(i, mdp.n_states) for i in range(mdp.n_states)]
    for mu in starts:
        for _ in range(max_steps):
            new = mu @ _policy_matrix(mdp.kernel_table(mu), alpha)
            if np.abs(new - mu).sum() < 1e-14:
                mu = new
                break
            mu = new
        else:
            return None
        limits.append(mu)
    if max(np.abs(m - limits[0]).sum() for m in limits) > 1e-9:
        return None
    return renormalize(limits[0])


def limiting_distribution(mdp: FiniteMfMdp, alpha, max_steps: int = 100_000) -> np.ndarray | None:
    if mdp.static_kernel:
        return _limit_static(_policy_matrix(mdp.kernel_table(None), alpha), max_steps)
    return _limit_mkv(mdp, alpha, max_steps)


def _policy_value(mdp: FiniteMfMdp, alpha, mu: np.ndarray, gamma: float) -> np.ndarray:
    nx = mdp.n_states
    idx = np.arange(nx)
    P = _policy_matrix(mdp.kernel_table(mu), alpha)
    f = mdp.cost_table(mu)[idx, list(alpha)]
    return np.linalg.solve(np.eye(nx) - gamma * P, f)


def mfc_bellman_verify(
    mdp: FiniteMfMdp, gamma: float, tolerance: float = 1e-8, mu0=None, max_steps: int = 100_000
) -> BellmanReport:
    """Brute-force the modified MFC Q-function over all deterministic controls.

    For each admissible control alpha (ergodic induced chain) this computes mu^alpha,
    V^alpha, and Q^alpha(x, a) = f(x, a, mu^alpha~) + gamma E[V^alpha(X_1)], where
    alpha~ is alpha switched to a at x and X_1 is drawn with the population at
    mu^alpha~.  Q* is the cellwise minimum over controls and the reported residual
    is the sup-norm gap in the Bellman identity at Q*.
    """
    nx, na = mdp.n_states, mdp.n_actions
    controls = list(itertools.product(range(na), repeat=nx))
    mu0 = uniform_distribution(nx) if mu0 is None else np.asarray(mu0, dtype=float)

    limits: dict[tuple, np.ndarray] = {}
    excluded = []
    for alpha in controls:
        lim = limiting_distribution(mdp, alpha, max_steps)
        if lim is None:
            excluded.append(alpha)
        else:
            limits[alpha] = lim
    if not limits:
        raise ValueError("no admissible control: every induced chain is non-ergodic")

    def modified(alpha, x, a):
        alt = list(alpha)
        alt[x] = a
        return tuple(alt)

    q_star = np.full((nx, na), np.inf)
    q_by_alpha: dict[tuple, np.ndarray] = {}
    values: dict[tuple, np.ndarray] = {}
    j_best, alpha_j = np.inf, None
    for alpha, mu in limits.items():
        V = _policy_value(mdp, alpha, mu, gamma)
        values[alpha] = V
        j = float(mu0 @ V)
        if j < j_best - 1e-14:
            j_best, alpha_j = j, alpha
        Q = np.full((nx, na), np.inf)
        for x in range(nx):
            for a in range(na):
                alt = modified(alpha, x, a)
                if alt not in limits:
                    continue
                mu_t = limits[alt]
                Q[x, a] = float(mdp.cost(x, a, mu_t)) + gamma * float(mdp.row(x, a, mu_t) @ V)
        q_by_alpha[alpha] = Q
        q_star = np.minimum(q_star, Q)

    alpha_star = tuple(int(i) for i in np.argmin(q_star, axis=1))
    # the greedy control of Q* attains Q* in every cell
    uniform = alpha_star in q_by_alpha and bool(
        np.allclose(q_by_alpha[alpha_star], q_star, rtol=0.0, atol=1e-12))

    residual = np.inf
    value_gap = switch_tv = np.inf
    if alpha_star in limits:
        v_min = q_star.min(axis=1)
        rhs = np.empty((nx, na))
        for x in range(nx):
            for a in range(na):
                alt = modified(alpha_star, x, a)
                if alt not in limits:
                    rhs[x, a] = np.nan
                    continue
                mu_t = limits[alt]
                rhs[x, a] = float(mdp.cost(x, a, mu_t)) + gamma * float(mdp.row(x, a, mu_t) @ v_min)
        finite = np.isfinite(q_star) & np.isfinite(rhs)
        residual = float(np.abs(q_star - rhs)[finite].max())
        value_gap = float(np.abs(v_min - values[alpha_star]).max())
        switch_tv = max(
            float(np.abs(limits[modified(alpha_star, x, alpha_star[x])] - limits[alpha_star]).sum())
            for x in range(nx)
        )

    return BellmanReport(
        residual=residual,
        tolerance=tolerance,
        q_star=q_star,
        alpha_star=alpha_star,
        alpha_j=alpha_j,
        mu_star=limits.get(alpha_star),
        value_residual=value_gap,
        self_switch_tv=switch_tv,
        uniform_minimizer=uniform,
        excluded=excluded,
        n_controls=len(controls),
    )


def random_table_mdp(rng: np.random.Generator, n_states: int, n_actions: int, mean_field: bool = True):
    """Dense random kernel and a cost coupled to the population mean state index."""
    from .envs import TableMdp

    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    base = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    phi = np.arange(n_states, dtype=float) / max(1, n_states - 1)
    if not mean_field:
        return TableMdp(P, base)
    lin = rng.uniform(-1.0, 1.0, size=(1, n_states, n_actions))
    quad = rng.uniform(0.0, 1.0, size=(1, n_states, n_actions))
    return TableMdp(P, base, phi=phi[None, :], lin=lin, quad=quad)
