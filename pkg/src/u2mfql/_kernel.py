"""Compiled episode loop for tabular environments."""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import FLUSH_TINY, RENORM_TOL


@njit(cache=True)
def _first_above(cdf, u):
    # first index with cdf[i] > u, clipped to the last index
    lo, hi = 0, cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


@njit(cache=True)
def _nudge(mu, x, rho):
    n = mu.shape[0]
    total = 0.0
    for i in range(n):
        target = 1.0 if i == x else 0.0
        v = mu[i] + rho * (target - mu[i])
        if v < FLUSH_TINY:
            v = 0.0
        mu[i] = v
        total += v
    if abs(total - 1.0) > RENORM_TOL:
        for i in range(n):
            mu[i] = mu[i] / total


@njit(cache=True)
def run_episode_kernel(q, visits, mu, u, rho_mu, omega_q, gamma, epsilon, cdf, phi, base, lin, quad):
    """One episode in place; returns the terminal state index.

    u holds 1 + 3 T uniforms: the initial draw, then per step the exploration
    coin, the random action index and the transition draw.
    """
    T = mu.shape[0] - 1
    nx = q.shape[0]
    na = q.shape[1]
    start = np.empty(nx)
    acc = 0.0
    for i in range(nx):
        acc += mu[T, i]
        start[i] = acc
    x = _first_above(start, u[0])
    for n in range(T):
        _nudge(mu[n], x, rho_mu)
        s = 0.0
        for i in range(nx):
            s += phi[i] * mu[n, i]
        if u[1 + 3 * n] < epsilon:
            a = int(u[2 + 3 * n] * na)
            if a > na - 1:
                a = na - 1
        else:
            a = 0
            best = q[x, 0]
            for j in range(1, na):
                if q[x, j] < best:
                    best = q[x, j]
                    a = j
        cost = base[x, a] + lin[x, a] * s + quad[x, a] * s * s
        y = _first_above(cdf[x, a], u[3 + 3 * n])
        vmin = q[y, 0]
        for j in range(1, na):
            if q[y, j] < vmin:
                vmin = q[y, j]
        visits[x, a] += 1
        rho = (1.0 + visits[x, a]) ** (-omega_q)
        q[x, a] = q[x, a] + rho * (cost + gamma * vmin - q[x, a])
        x = y
    _nudge(mu[T], x, rho_mu)
    return x
