"""Closed-form solutions of the linear-quadratic benchmark and an ODE cross-check.

The benchmark has running cost 1/2 a^2 + c1 (x - c2 m)^2 + c3 (x - c4)^2 + c5 m^2 and
dynamics dX = a dt + sigma dW.  The value function is quadratic,
V(x) = gamma2 x^2 + gamma1 x + gamma0, and the optimal feedback is
a(x) = -(2 gamma2 x + gamma1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import StateGrid, distribution_mean, project_to_grid
from .envs import LQParams, gaussian_cell_masses
from .errors import ComplexEigenvalueError, ModelDegeneracyError

MFG = "mfg"
MFC = "mfc"
MODES = (MFG, MFC)

_DEGENERATE = 1e-14


def _check_mode(mode: str) -> str:
    mode = str(mode).lower()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True)
class LQSolution:
    gamma2: float
    gamma1: float
    gamma0: float
    m: float
    mode: str


@dataclass(frozen=True)
class MeanPathCoefficients:
    lambda1: float
    lambda2: float
    g: float
    b: float
    a_coef: float
    d: float
    m0: float


@dataclass(frozen=True)
class OdePath:
    t: np.ndarray
    m: np.ndarray
    gamma1: np.ndarray
    gamma0: np.ndarray  # sampled every second step, at times t[::2]


def riccati_root(beta: float, c_sum: float) -> float:
    """Positive root of 2 G^2 + beta G - c_sum = 0."""
    if c_sum < 0:
        raise ValueError("c1 + c3 must be nonnegative")
    return (-beta + math.sqrt(beta * beta + 8.0 * c_sum)) / 4.0


def gamma2(params: LQParams) -> float:
    return riccati_root(params.beta, params.c1 + params.c3)


def interaction_coefficient(params: LQParams, mode: str) -> float:
    """Coefficient b of m in the linear-coefficient equation."""
    p = params
    if _check_mode(mode) == MFG:
        return 2.0 * p.c1 * p.c2
    return 2.0 * (p.c1 * p.c2 * (2.0 - p.c2) - p.c5)


def solution_for_mean(params: LQParams, m: float, mode: str) -> LQSolution:
    """Assemble (gamma2, gamma1, gamma0) around a given ergodic mean m."""
    p = params
    mode = _check_mode(mode)
    g2 = gamma2(p)
    b = interaction_coefficient(p, mode)
    g1 = -(b * m + 2.0 * p.c3 * p.c4) / (p.beta + 2.0 * g2)
    g0 = (p.c5 * m * m + p.c3 * p.c4 * p.c4 + p.c1 * p.c2 * p.c2 * m * m
          + p.sigma * p.sigma * g2 - 0.5 * g1 * g1) / p.beta
    return LQSolution(g2, g1, g0, m, mode)


def _ergodic_mean(params: LQParams, mode: str) -> float:
    p = params
    g2 = gamma2(p)
    if mode == MFG:
        den = g2 * (p.beta + 2.0 * g2) - p.c1 * p.c2
    else:
        den = g2 * (p.beta + 2.0 * g2) + p.c5 - p.c1 * p.c2 * (2.0 - p.c2)
    scale = max(1.0, p.c1 + p.c3, abs(p.c1 * p.c2), p.c5)
    if abs(den) <= _DEGENERATE * scale:
        raise ModelDegeneracyError(f"{mode} ergodic mean has a vanishing denominator ({den!r})")
    return p.c3 * p.c4 / den


def solve_amfg(params: LQParams) -> LQSolution:
    return solution_for_mean(params, _ergodic_mean(params, MFG), MFG)


def solve_amfc(params: LQParams) -> LQSolution:
    return solution_for_mean(params, _ergodic_mean(params, MFC), MFC)


# The stationary formulations have the same solution as the asymptotic ones.
solve_smfg = solve_amfg
solve_smfc = solve_amfc


def solve(params: LQParams, mode: str) -> LQSolution:
    return solve_amfg(params) if _check_mode(mode) == MFG else solve_amfc(params)


def optimal_control(sol: LQSolution, x):
    return -(2.0 * sol.gamma2 * x + sol.gamma1)


def value_function(sol: LQSolution, x):
    return sol.gamma2 * x * x + sol.gamma1 * x + sol.gamma0


def mean_path_coefficients(params: LQParams, mode: str, m0: float = 0.0) -> MeanPathCoefficients:
    p = params
    mode = _check_mode(mode)
    g2 = gamma2(p)
    b = interaction_coefficient(p, mode)
    # (4 gamma2 + beta)^2 equals beta^2 + 8 (c1 + c3); use the exact form
    disc = p.beta * p.beta + 8.0 * (p.c1 + p.c3) - 4.0 * b
    if disc < 0:
        raise ComplexEigenvalueError(f"negative discriminant {disc!r}: oscillatory mean path")
    root = math.sqrt(disc)
    return MeanPathCoefficients(
        lambda1=(p.beta - root) / 2.0,
        lambda2=(p.beta + root) / 2.0,
        g=-2.0 * g2,
        b=b,
        a_coef=2.0 * g2 + p.beta,
        d=-1.0,
        m0=float(m0),
    )


def _limit_mean(coeffs: MeanPathCoefficients, params: LQParams) -> float:
    prod = coeffs.lambda1 * coeffs.lambda2
    if prod == 0 or coeffs.lambda1 == coeffs.lambda2:
        raise ModelDegeneracyError("mean path needs distinct nonzero eigenvalues")
    return -2.0 * params.c3 * params.c4 / prod


def mean_path(coeffs: MeanPathCoefficients, params: LQParams, t):
    m_inf = _limit_mean(coeffs, params)
    return (coeffs.m0 - m_inf) * np.exp(coeffs.lambda1 * np.asarray(t, dtype=float)) + m_inf


def gamma1_path(coeffs: MeanPathCoefficients, params: LQParams, t):
    # gamma1 = g m - dm/dt along the stable solution
    m_inf = _limit_mean(coeffs, params)
    decay = np.exp(coeffs.lambda1 * np.asarray(t, dtype=float))
    return (coeffs.g - coeffs.lambda1) * (coeffs.m0 - m_inf) * decay + coeffs.g * m_inf


def integrate_ode_path(params: LQParams, mode: str, m0: float, horizon: float, h: float) -> OdePath:
    """Numerically solve the coupled forward-backward linear system on [0, horizon].

    m runs forward from m0 and gamma1 backward from gamma1(horizon) = 0 with gamma2
    frozen at its stationary value.  The boundary problem is decoupled with the
    sweep gamma1 = P m + q, where P solves a scalar Riccati equation and q a linear
    one, both integrated backward with RK4; m is then integrated forward.  gamma0 is
    integrated backward last, from gamma0(horizon) = 0.
    """
    if not h > 0 or h > 1e-2:
        raise ValueError(f"step h must lie in (0, 1e-2], got {h}")
    p = params
    mode = _check_mode(mode)
    n = int(round(horizon / h))
    if n < 2 or abs(n * h - horizon) > 1e-9 * horizon:
        raise ValueError("horizon must be a multiple of h")
    g2 = gamma2(p)
    g, a = -2.0 * g2, 2.0 * g2 + p.beta
    b = interaction_coefficient(p, mode)
    src = 2.0 * p.c3 * p.c4

    # backward sweep at half-step resolution, stored on the fine grid
    hb = h / 2.0
    nf = 2 * n
    P = np.empty(nf + 1)
    q = np.empty(nf + 1)
    P[nf] = q[nf] = 0.0

    # dP/dt = P^2 + (a - g) P + b,  dq/dt = (a + P) q + src, stepped backward
    pv = qv = 0.0
    k = b  # (b d) with d = -1 enters as +b after substituting gamma1 = P m + q
    for i in range(nf, 0, -1):
        s = -hb
        p1 = pv * pv + (a - g) * pv + k
        q1 = (a + pv) * qv + src
        pt, qt = pv + 0.5 * s * p1, qv + 0.5 * s * q1
        p2 = pt * pt + (a - g) * pt + k
        q2 = (a + pt) * qt + src
        pt, qt = pv + 0.5 * s * p2, qv + 0.5 * s * q2
        p3 = pt * pt + (a - g) * pt + k
        q3 = (a + pt) * qt + src
        pt, qt = pv + s * p3, qv + s * q3
        p4 = pt * pt + (a - g) * pt + k
        q4 = (a + pt) * qt + src
        pv += s * (p1 + 2.0 * p2 + 2.0 * p3 + p4) / 6.0
        qv += s * (q1 + 2.0 * q2 + 2.0 * q3 + q4) / 6.0
        P[i - 1], q[i - 1] = pv, qv

    # forward mean path on the coarse grid; midpoints come from the fine grid
    m = np.empty(n + 1)
    m[0] = m0
    for i in range(n):
        pa, pm, pb = P[2 * i], P[2 * i + 1], P[2 * i + 2]
        qa, qm, qb = q[2 * i], q[2 * i + 1], q[2 * i + 2]
        x = m[i]
        k1 = (g - pa) * x - qa
        k2 = (g - pm) * (x + 0.5 * h * k1) - qm
        k3 = (g - pm) * (x + 0.5 * h * k2) - qm
        k4 = (g - pb) * (x + h * k3) - qb
        m[i + 1] = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    gamma1 = P[::2] * m + q[::2]

    # gamma0 backward with step 2h so that midpoints lie on the coarse grid
    kap = p.c1 * p.c2 * p.c2 + p.c5
    const = -p.sigma * p.sigma * g2 - p.c3 * p.c4 * p.c4

    def g0_rhs(v, i):
        return p.beta * v + 0.5 * gamma1[i] ** 2 + const - kap * m[i] ** 2

    n0 = n // 2
    gamma0 = np.empty(n0 + 1)
    gamma0[n0] = 0.0
    hh = 2.0 * h
    for j in range(n0, 0, -1):
        v = gamma0[j]
        i_hi, i_mid, i_lo = 2 * j, 2 * j - 1, 2 * j - 2
        k1 = g0_rhs(v, i_hi)
        k2 = g0_rhs(v - 0.5 * hh * k1, i_mid)
        k3 = g0_rhs(v - 0.5 * hh * k2, i_mid)
        k4 = g0_rhs(v - hh * k3, i_lo)
        gamma0[j - 1] = v - hh * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    t = np.arange(n + 1) * h
    return OdePath(t=t, m=m, gamma1=gamma1, gamma0=gamma0)


def stationary_state_distribution(sol: LQSolution, params: LQParams, grid: StateGrid) -> np.ndarray:
    """Cell masses of the Ornstein-Uhlenbeck invariant law N(m, sigma^2 / (4 gamma2))."""
    if not sol.gamma2 > 0:
        raise ModelDegeneracyError("stationary law requires gamma2 > 0")
    sd = params.sigma / math.sqrt(4.0 * sol.gamma2)
    mass = gaussian_cell_masses(sol.m, sd, grid.points, grid.step)
    return mass / mass.sum()


def support_99(dist, grid: StateGrid, level: float = 0.99) -> np.ndarray:
    """Smallest symmetric index window around the cell nearest the mean holding `level` mass."""
    mu = np.asarray(dist, dtype=float)
    n = len(mu)
    c = project_to_grid(distribution_mean(mu, grid), grid)
    for r in range(n):
        lo, hi = max(0, c - r), min(n - 1, c + r)
        if mu[lo:hi + 1].sum() >= level - 1e-12:
            return np.arange(lo, hi + 1)
    return np.arange(n)
