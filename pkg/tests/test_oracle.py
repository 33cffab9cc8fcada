from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from u2mfql import oracle
from u2mfql.core import StateGrid, distribution_mean, one_hot, uniform_distribution
from u2mfql.envs import LQParams
from u2mfql.errors import ComplexEigenvalueError, ModelDegeneracyError

G2 = (-1 + math.sqrt(7)) / 4

stable_params = st.builds(
    LQParams,
    c1=st.floats(0.05, 1.0),
    c2=st.floats(-1.0, 1.0),
    c3=st.floats(0.1, 1.0),
    c4=st.floats(-1.0, 1.0),
    c5=st.floats(0.0, 2.0),
    beta=st.floats(0.2, 2.0),
    sigma=st.floats(0.1, 1.0),
)


def test_gamma2_examples(params):
    assert oracle.gamma2(LQParams(c1=0.0, c3=0.0)) == 0.0
    assert oracle.gamma2(params) == pytest.approx(G2, abs=1e-15)
    assert oracle.riccati_root(0.0, 0.5) == 0.5


@given(stable_params)
def test_riccati_and_stationarity(p):
    g2 = oracle.gamma2(p)
    assert abs(2 * g2 * g2 + p.beta * g2 - (p.c1 + p.c3)) <= 1e-12
    for mode in oracle.MODES:
        try:
            sol = oracle.solve(p, mode)
        except ModelDegeneracyError:
            continue
        assert abs(2 * sol.gamma2 * sol.m + sol.gamma1) <= 1e-12 * max(1.0, abs(sol.gamma1))
        assert oracle.optimal_control(sol, sol.m) == pytest.approx(0.0, abs=1e-12 * max(1.0, abs(sol.gamma1)))


def test_solve_amfg_examples(params):
    sol = oracle.solve_amfg(params)
    assert sol.m == pytest.approx(0.8, abs=1e-12)
    assert sol.gamma1 == pytest.approx(-1.2 / (1 + 2 * G2), abs=1e-12)
    assert sol.gamma1 == pytest.approx(-0.6583005, abs=1e-7)
    zero = oracle.solve_amfg(LQParams(c4=0.0))
    assert zero.m == 0.0 and zero.gamma1 == 0.0


def test_solve_amfc_examples(params):
    sol = oracle.solve_amfc(params)
    assert sol.m == pytest.approx(0.3 / 5.5625, abs=1e-12)
    assert sol.gamma1 == pytest.approx(-0.0443797, abs=1e-6)
    assert sol.gamma2 == oracle.solve_amfg(params).gamma2
    p = LQParams(c2=1.0, c5=0.0)
    a, b = oracle.solve_amfg(p), oracle.solve_amfc(p)
    assert (a.gamma2, a.gamma1, a.gamma0, a.m) == pytest.approx((b.gamma2, b.gamma1, b.gamma0, b.m), abs=1e-15)


def test_degenerate_denominator():
    # c1 + c3 - c1 c2 = 0
    with pytest.raises(ModelDegeneracyError):
        oracle.solve_amfg(LQParams(c1=0.5, c2=2.0, c3=0.5))


def test_stationary_aliases(params):
    assert oracle.solve_smfg is oracle.solve_amfg
    assert oracle.solve_smfc is oracle.solve_amfc
    assert oracle.solve_smfg(params) == oracle.solve_amfg(params)


def test_optimal_control_examples(params):
    sol = oracle.solve_amfg(params)
    assert oracle.optimal_control(sol, 0.0) == pytest.approx(0.6583005, abs=1e-7)
    assert oracle.optimal_control(sol, 1.8) == pytest.approx(-(2 * G2 * 1.8) - sol.gamma1, abs=1e-12)
    assert oracle.optimal_control(sol, 1.8) == pytest.approx(-0.8228757, abs=1e-6)


def test_value_function_examples(params):
    zero = LQParams(c1=0.0, c3=0.0, c5=0.0)
    sol0 = oracle.solution_for_mean(zero, 0.0, "mfg")
    assert np.all(oracle.value_function(sol0, np.linspace(-2, 2, 9)) == 0.0)
    sol = oracle.solve_amfg(params)
    x = np.linspace(-1, 3, 4001)
    assert x[np.argmin(oracle.value_function(sol, x))] == pytest.approx(sol.m, abs=1e-3)


def test_value_against_ode(params):
    for mode in oracle.MODES:
        sol = oracle.solve(params, mode)
        path = oracle.integrate_ode_path(params, mode, sol.m, horizon=40.0, h=1e-3)
        assert path.gamma0[0] == pytest.approx(sol.gamma0, abs=1e-6)
        v_ode = sol.gamma2 * 0.64 + path.gamma1[0] * 0.8 + path.gamma0[0]
        assert v_ode == pytest.approx(oracle.value_function(sol, 0.8), abs=1e-6)


def test_eigenvalues(params):
    c = oracle.mean_path_coefficients(params, "mfg")
    assert (c.lambda1, c.lambda2) == (-0.5, 1.5)
    c = oracle.mean_path_coefficients(params, "mfc")
    assert c.lambda1 == pytest.approx((1 - math.sqrt(45.5)) / 2, abs=1e-14)
    assert c.lambda1 == pytest.approx(-2.8726835, abs=1e-6)
    assert c.lambda2 == pytest.approx(3.8726835, abs=1e-6)


@given(stable_params)
def test_eigenvalue_trace(p):
    for mode in oracle.MODES:
        try:
            c = oracle.mean_path_coefficients(p, mode)
        except ComplexEigenvalueError:
            continue
        assert c.lambda1 + c.lambda2 == pytest.approx(p.beta, abs=1e-12)


def test_complex_eigenvalues_rejected():
    with pytest.raises(ComplexEigenvalueError):
        oracle.mean_path_coefficients(LQParams(c1=1.0, c2=3.0, c3=0.1, beta=0.1), "mfg")


def test_mean_path_examples(params):
    for mode in oracle.MODES:
        c = oracle.mean_path_coefficients(params, mode, m0=-0.7)
        assert oracle.mean_path(c, params, 0.0) == pytest.approx(-0.7, abs=1e-15)
        assert oracle.mean_path(c, params, 40.0) == pytest.approx(oracle.solve(params, mode).m, abs=1e-8)


@given(stable_params, st.floats(-2, 2), st.floats(0, 30))
def test_mean_path_contracts(p, m0, t):
    for mode in oracle.MODES:
        try:
            c = oracle.mean_path_coefficients(p, mode, m0)
            sol = oracle.solve(p, mode)
        except (ComplexEigenvalueError, ModelDegeneracyError):
            continue
        if not c.lambda1 < 0:
            continue
        gap = abs(oracle.mean_path(c, p, t) - sol.m)
        assert gap <= abs(m0 - sol.m) * math.exp(c.lambda1 * t) + 1e-10


def test_gamma1_path(params):
    for mode in oracle.MODES:
        sol = oracle.solve(params, mode)
        c = oracle.mean_path_coefficients(params, mode, m0=0.0)
        assert oracle.gamma1_path(c, params, 40.0) == pytest.approx(sol.gamma1, abs=1e-8)
        t, h = np.linspace(0.0, 5.0, 11), 1e-4
        dm = (oracle.mean_path(c, params, t + h) - oracle.mean_path(c, params, t - h)) / (2 * h)
        rhs = -(2 * sol.gamma2 * oracle.mean_path(c, params, t) + oracle.gamma1_path(c, params, t))
        assert np.abs(dm - rhs).max() <= 1e-6
        still = oracle.mean_path_coefficients(params, mode, m0=sol.m)
        g = oracle.gamma1_path(still, params, np.linspace(0, 20, 7))
        assert np.abs(g - sol.gamma1).max() <= 1e-14


def test_ode_oracle(params):
    for mode in oracle.MODES:
        c = oracle.mean_path_coefficients(params, mode, m0=0.0)
        path = oracle.integrate_ode_path(params, mode, 0.0, horizon=40.0, h=1e-3)
        keep = path.t <= 20.0
        assert np.abs(path.m[keep] - oracle.mean_path(c, params, path.t[keep])).max() <= 1e-6
        assert np.abs(path.gamma1[keep] - oracle.gamma1_path(c, params, path.t[keep])).max() <= 1e-6


def test_ode_gamma1_limit(params):
    for mode in oracle.MODES:
        path = oracle.integrate_ode_path(params, mode, 0.0, horizon=80.0, h=1e-3)
        assert path.gamma1[40_000] == pytest.approx(oracle.solve(params, mode).gamma1, abs=1e-6)


def test_ode_zero_cost():
    p = LQParams(c1=0.0, c3=0.0, c5=0.0, c4=0.0)
    path = oracle.integrate_ode_path(p, "mfg", 0.3, horizon=2.0, h=1e-2)
    assert np.all(path.m == 0.3) and np.all(path.gamma1 == 0.0)


def test_ode_rejects_large_step(params):
    with pytest.raises(ValueError):
        oracle.integrate_ode_path(params, "mfg", 0.0, horizon=1.0, h=0.05)


def test_stationary_distribution(params, grid):
    sol = oracle.solve_amfg(params)
    d = oracle.stationary_state_distribution(sol, params, grid)
    assert d.sum() == pytest.approx(1.0, abs=1e-15)
    assert abs(distribution_mean(d, grid) - 0.8) <= 0.1
    sd = math.sqrt(float(d @ (grid.points - distribution_mean(d, grid)) ** 2))
    assert sd == pytest.approx(0.2338513, abs=2e-3)  # grid quantisation adds step^2 / 12
    assert math.sqrt(params.sigma**2 / (4 * sol.gamma2)) == pytest.approx(0.2338513, abs=1e-6)
    i = int(np.argmin(np.abs(grid.points - 0.8)))
    k = min(i, 40 - i)
    assert np.abs(d[i - k:i + k + 1] - d[i - k:i + k + 1][::-1]).max() <= 1e-12


def test_support_99(params, grid):
    assert oracle.support_99(one_hot(7, 41), grid).tolist() == [7]
    g100 = StateGrid(4.95, 4.95, 0.1)
    assert len(oracle.support_99(uniform_distribution(100), g100)) == 99
    d = oracle.stationary_state_distribution(oracle.solve_amfg(params), params, grid)
    sup = oracle.support_99(d, grid)
    assert 11 <= len(sup) <= 15
    assert grid.points[sup[0]] == pytest.approx(0.2, abs=0.11) and grid.points[sup[-1]] == pytest.approx(1.4, abs=0.11)
