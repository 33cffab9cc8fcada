from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from u2mfql.core import ActionGrid, StateGrid, distribution_mean, make_rng, project_to_grid, uniform_distribution
from u2mfql.envs import (
    FiniteEnv,
    FiniteMfMdp,
    LQEnv,
    LQParams,
    TableMdp,
    env_step,
    finite_env_step,
    frozen_statistics,
    gaussian_cell_masses,
    load_mdp,
    lq_cost,
    lq_kernel_table,
    lq_transition_row,
    parse_mdp,
)
from u2mfql.errors import ModelError


def test_lq_cost_examples(params):
    assert lq_cost(0.0, 0.0, 0.0, LQParams(c4=0.0)) == 0.0
    assert lq_cost(0.6, 0.0, 0.0, params) == pytest.approx(0.09, abs=1e-15)
    assert lq_cost(0.8, -0.2, 0.8, params) == pytest.approx(3.28, abs=1e-12)


@given(st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 2))
def test_lq_cost_gradient_in_action(x, a, m):
    p = LQParams()
    h = 1e-5
    fd = (lq_cost(x, a + h, m, p) - lq_cost(x, a - h, m, p)) / (2 * h)
    assert fd == pytest.approx(a, abs=1e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        LQParams(sigma=0.0)
    with pytest.raises(ValueError):
        LQParams(c1=-1.0)
    with pytest.raises(ValueError):
        LQParams(beta=math.nan)


def test_rows_sum_to_one(grid, agrid, params):
    table = lq_kernel_table(grid, agrid, params)
    assert np.all(table >= 0)
    assert np.abs(table.sum(axis=-1) - 1).max() <= 1e-12


def test_row_symmetric_at_center(grid, params):
    c = project_to_grid(0.5, grid)
    row = lq_transition_row(c, 0.0, grid, LQParams(sigma=3.0))
    assert np.abs(row - row[::-1]).max() <= 1e-12


def test_degenerate_noise_row(grid):
    p = LQParams(sigma=1e-6)
    i = project_to_grid(1.0, grid)
    row = lq_transition_row(i, 1.0, grid, p)
    target = project_to_grid(float(grid.points[i]) + 1.0 * p.dt, grid)
    assert row[target] >= 1 - 1e-9


def test_literal_variant_moves_by_full_action(grid):
    p = LQParams(sigma=1e-6)
    i = project_to_grid(0.0, grid)
    row = lq_transition_row(i, 1.0, grid, p, variant="literal")
    assert row[project_to_grid(1.0, grid)] >= 1 - 1e-9
    with pytest.raises(ValueError):
        lq_transition_row(i, 1.0, grid, p, variant="other")


def test_translation_consistency(params):
    g1 = StateGrid(0.5, 2.0, 0.1)
    g2 = StateGrid(0.6, 2.0, 0.1)
    r1 = lq_transition_row(20, 0.3, g1, params)
    r2 = lq_transition_row(20, 0.3, g2, params)
    assert np.abs(r1[1:-1] - r2[1:-1]).max() <= 1e-10


def test_tail_cells_accurate():
    pts = np.linspace(-1, 1, 21)
    row = gaussian_cell_masses(5.0, 0.1, pts, 0.1)
    assert row[-1] == 1.0 and row[:-1].max() < 1e-300


def test_env_step_replay_and_cost(grid, agrid, params):
    mu = uniform_distribution(41)
    a = env_step(10, 3, mu, grid, agrid, params, make_rng(5))
    b = env_step(10, 3, mu, grid, agrid, params, make_rng(5))
    assert a == b
    expected = lq_cost(float(grid.points[10]), float(agrid.points[3]), distribution_mean(mu, grid), params) * params.dt
    assert a.cost == expected


def test_env_step_frequencies(grid, agrid):
    p = LQParams(sigma=2.0)  # spread over several cells
    mu = uniform_distribution(41)
    rng = make_rng(11)
    n = 100_000
    env = LQEnv(p, grid, agrid)
    counts = np.bincount([env.step(20, 10, mu, rng).next_state_index for _ in range(n)], minlength=41)
    row = lq_transition_row(20, 0.0, grid, p)
    sd = np.sqrt(n * row * (1 - row))
    assert np.all(np.abs(counts - n * row) <= 3 * sd + 1)


def test_env_step_cost_independent_of_next_state(grid, agrid, params):
    env = LQEnv(params, grid, agrid)
    mu = uniform_distribution(41)
    costs = {env.step(20, 5, mu, make_rng(s)).cost for s in range(20)}
    assert len(costs) == 1


def test_lq_tabular_model_matches_cost(grid, agrid, params):
    env = LQEnv(params, grid, agrid)
    model = env.tabular_model()
    assert model is env.tabular_model()
    rng = np.random.default_rng(0)
    for _ in range(20):
        mu = rng.dirichlet(np.ones(41))
        s = float(model.phi @ mu)
        x, a = rng.integers(41), rng.integers(21)
        direct = env.step(int(x), int(a), mu, make_rng(0)).cost
        assert model.base[x, a] + model.lin[x, a] * s + model.quad[x, a] * s * s == pytest.approx(direct, abs=1e-14)


def _two_state(rows, cost=1.0):
    return FiniteMfMdp(2, 1, lambda x, a, mu: rows[x], lambda x, a, mu: cost)


def test_finite_step_deterministic_kernel():
    mdp = _two_state([[0.0, 1.0], [1.0, 0.0]])
    rng = make_rng(0)
    assert all(finite_env_step(mdp, 0, 0, [0.5, 0.5], rng).next_state_index == 1 for _ in range(50))


def test_finite_step_frequencies_and_cost():
    mdp = _two_state([[0.5, 0.5], [0.5, 0.5]], cost=2.5)
    rng = make_rng(1)
    n = 100_000
    outs = [finite_env_step(mdp, 0, 0, [0.5, 0.5], rng) for _ in range(n)]
    ones = sum(o.next_state_index for o in outs)
    assert abs(ones - n / 2) <= 3 * math.sqrt(n / 4)
    assert all(o.cost == 2.5 for o in outs[:100])


def test_finite_step_rejects_bad_row():
    mdp = _two_state([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ModelError):
        finite_env_step(mdp, 0, 0, [0.5, 0.5], make_rng(0))


def test_table_mdp_cost_and_freeze():
    P = np.full((2, 2, 2), 0.5)
    mdp = TableMdp(P, [[1, 2], [3, 4]], phi=[[0, 1]], lin=[[[1, 0], [0, 1]]], quad=[[[0, 1], [1, 0]]])
    mu = np.array([0.25, 0.75])
    F = mdp.cost_table(mu)
    assert F[0, 0] == pytest.approx(1 + 0.75)
    assert F[0, 1] == pytest.approx(2 + 0.75**2)
    assert F[1, 1] == pytest.approx(4 + 0.75)
    assert mdp.depends_on_mu
    frozen = frozen_statistics(mdp, [0.75])
    assert not frozen.depends_on_mu
    assert np.allclose(frozen.cost_table([1.0, 0.0]), F)
    with pytest.raises(ModelError):
        TableMdp(np.full((2, 2, 2), 0.6), np.zeros((2, 2)))


def test_finite_env_has_compiled_model():
    mdp = TableMdp(np.full((2, 1, 2), 0.5), [[1.0], [2.0]])
    env = FiniteEnv(mdp)
    assert env.tabular_model() is not None and env.n_states == 2 and env.n_actions == 1


def test_shipped_toy_file():
    f = load_mdp("toy_coordination")
    assert f.mdp.n_states == 2 and f.mdp.n_actions == 2
    assert set(f.rates) == {"mfg", "mfc"}
    assert f.gamma == 0.5 and np.isclose(f.mu0.sum(), 1)


def test_mdp_file_validation(tmp_path):
    with pytest.raises(ModelError):
        parse_mdp({"base": [[0.0]]})
    with pytest.raises(ModelError):
        parse_mdp({"kernel": [[[1.0]]], "base": [[0.0]], "gamma": 1.0})
    with pytest.raises(ModelError):
        parse_mdp({"kernel": [[[1.0]]], "base": [[0.0]], "mu0": [0.5]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelError):
        load_mdp(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"kernel": [[[1.0]]], "base": [[0.3]]}))
    assert load_mdp(good).mdp.cost_table([1.0])[0, 0] == 0.3
    with pytest.raises(ModelError):
        load_mdp(tmp_path / "missing.json")
