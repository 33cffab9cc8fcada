"""Command line entry points: solve-benchmark, train, iterate, evaluate.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracle
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .core import distribution_mean, make_rng
from .envs import LQEnv, frozen_statistics, load_mdp
from .errors import CheckpointError, ConfigError, ModelError, NumericalError
from .learner import trailing_summary, train
from .metrics import METRIC_NAMES, Benchmark, MetricsRecorder, RunMetrics, aggregate_runs, mse_control, mse_mean
from .twoscale import IterState, greedy_controls, iterate_deterministic, iterate_stochastic, rates_from_dict

log = logging.getLogger("u2mfql")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# solve-benchmark


def solve_benchmark(cfg: ExperimentConfig, out: Path) -> dict:
    params, grid = cfg.params(), cfg.grid()
    x = np.asarray(grid.points)
    sols = {mode: oracle.solve(params, mode) for mode in oracle.MODES}
    dists = {mode: oracle.stationary_state_distribution(sols[mode], params, grid) for mode in oracle.MODES}
    cols = [x]
    for kind in ("control", "value"):
        f = oracle.optimal_control if kind == "control" else oracle.value_function
        cols += [f(sols[mode], x) for mode in oracle.MODES]
    cols += [dists[mode] for mode in oracle.MODES]
    write_csv(out / "oracle.csv",
              ["x", "control_mfg", "control_mfc", "value_mfg", "value_mfc", "mu_stat_mfg", "mu_stat_mfc"],
              zip(*cols))
    scalars = {"gamma2": sols["mfg"].gamma2}
    for mode in oracle.MODES:
        scalars[f"gamma1_{mode}"] = sols[mode].gamma1
    for mode in oracle.MODES:
        scalars[f"gamma0_{mode}"] = sols[mode].gamma0
    for mode in oracle.MODES:
        scalars[f"m_{mode}"] = sols[mode].m
    for mode in oracle.MODES:
        c = oracle.mean_path_coefficients(params, mode)
        scalars[f"lambda1_{mode}"] = c.lambda1
        scalars[f"lambda2_{mode}"] = c.lambda2
    write_csv(out / "oracle_scalars.csv", ["name", "value"], scalars.items())
    return scalars


# ---------------------------------------------------------------------------
# train


@dataclass
class RunResult:
    index: int
    seed: int
    episodes: int
    reason: str
    metrics: RunMetrics
    mu_avg: np.ndarray
    control_avg: np.ndarray
    value_avg: np.ndarray
    final_mean: float


def train_single(cfg: ExperimentConfig, index: int, out: Path) -> RunResult:
    """One seeded run; writes run_<index>/metrics.csv and run_<index>/checkpoint.qt."""
    params, grid, agrid = cfg.params(), cfg.grid(), cfg.agrid()
    tc = cfg.train_config(index)
    env = LQEnv(params, grid, agrid, cfg.transition_variant)
    bench = Benchmark.for_mode(params, grid, cfg.regime)
    rec = MetricsRecorder(bench, grid, agrid, cfg.metrics_stride, cfg.n_episodes)
    run_dir = out / f"run_{index}"
    run_dir.mkdir(parents=True, exist_ok=True)
    state, reason = train(env, tc, discount=cfg.discount(), callback=rec)
    rec.finish(state)
    m = rec.metrics
    write_csv(run_dir / "metrics.csv", ["episode", *METRIC_NAMES],
              zip(m.episodes, m.mse_control_by_episode, m.mse_mean_by_episode, m.tv_by_episode, m.q11_by_episode))
    save_checkpoint(state, run_dir / "checkpoint.qt")
    s = trailing_summary(state, agrid)
    return RunResult(index, tc.seed, state.episode, reason, m, s["mu"], s["control"], s["value"],
                     distribution_mean(state.mu_by_step[-1], grid))


def _train_job(args) -> RunResult:
    cfg, index, out = args
    return train_single(cfg, index, out)


def run_training(cfg: ExperimentConfig, out: Path, jobs: int | None = None) -> list[RunResult]:
    """All runs of a configuration plus the aggregate files; returns per-run results in run order."""
    jobs = jobs or os.cpu_count() or 1
    tasks = [(cfg, i, out) for i in range(cfg.n_runs)]
    if jobs == 1 or cfg.n_runs == 1:
        results = [_train_job(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.n_runs)) as pool:
            results = list(pool.map(_train_job, tasks))
    write_aggregates(cfg, results, out)
    return results


def write_aggregates(cfg: ExperimentConfig, results: list[RunResult], out: Path) -> None:
    agg = aggregate_runs([r.metrics for r in results])
    header = ["episode"]
    cols = [agg["episode"][0]]
    for name in METRIC_NAMES:
        header += [f"{name}_mean", f"{name}_std"]
        cols += list(agg[name])
    write_csv(out / "summary.csv", header, zip(*cols))

    x = np.asarray(cfg.grid().points)
    control = np.mean([r.control_avg for r in results], axis=0)
    value = np.mean([r.value_avg for r in results], axis=0)
    mu = np.mean([r.mu_avg for r in results], axis=0)
    write_csv(out / "learned.csv", ["x", "control_learned_avg", "value_learned_avg", "mu_learned_avg"],
              zip(x, control, value, mu))

    grid = cfg.grid()
    rows = []
    for r in results:
        rows.append((r.index, r.seed, r.episodes, r.reason, distribution_mean(r.mu_avg, grid), r.final_mean,
                     r.metrics.mse_control_by_episode[-1], r.metrics.mse_mean_by_episode[-1]))
    write_csv(out / "runs.csv",
              ["run", "seed", "episodes", "reason", "trailing_mean", "final_mean", "final_mse_control",
               "final_mse_mean"], rows)


# ---------------------------------------------------------------------------
# iterate


def run_iterate(mdp_path: str, regime: str, n_iters: int, out: Path, stochastic: bool = False, seed: int = 0,
                freeze: float | None = None, stop_tol: float | None = None, cfg: ExperimentConfig | None = None):
    f = load_mdp(mdp_path)
    mdp = f.mdp if freeze is None else frozen_statistics(f.mdp, np.full(len(f.mdp.phi), freeze))
    if regime in f.rates:
        rates = rates_from_dict(f.rates[regime])
    else:
        cfg = cfg or ExperimentConfig()
        rates = rates_from_dict({"omega_mu": cfg.omega_mu, "omega_q": cfg.omega_q})
    init = IterState(f.q0.copy(), f.mu0.copy())
    if stochastic:
        res = iterate_stochastic(init, rates, mdp, f.gamma, n_iters, make_rng(seed))
    else:
        res = iterate_deterministic(init, rates, mdp, f.gamma, n_iters, stop_tol=stop_tol)
    write_csv(out / "iterate.csv", ["k", "resid_T_inf", "resid_P_inf"],
              zip(range(len(res.resid_T)), res.resid_T, res.resid_P))
    st = res.state
    control = greedy_controls(st.q)
    rows = [(x, st.mu[x], int(control[x]), *st.q[x]) for x in range(mdp.n_states)]
    write_csv(out / "iterate_final.csv",
              ["x", "mu", "control", *[f"q_{a}" for a in range(mdp.n_actions)]], rows)
    return res


# ---------------------------------------------------------------------------
# evaluate


def evaluate_checkpoint(cfg: ExperimentConfig, path: str, out: Path | None = None) -> dict:
    params, grid, agrid = cfg.params(), cfg.grid(), cfg.agrid()
    state = load_checkpoint(path)
    if state.q.shape != (len(grid.points), len(agrid.points)):
        raise CheckpointError(f"checkpoint Q shape {state.q.shape} does not match the configured grids")
    bench = Benchmark.for_mode(params, grid, cfg.regime)
    control = np.asarray(agrid.points)[np.argmin(state.q.values, axis=1)]
    m_T = distribution_mean(state.mu_by_step[-1], grid)
    result = {
        "episode": state.episode,
        "seed": state.seed,
        "mse_control": mse_control(control, bench.solution, bench.support, grid),
        "mean_T": m_T,
        "mse_mean": mse_mean([m_T], bench.solution.m),
        "oracle_m": bench.solution.m,
    }
    if out is not None:
        write_csv(out / "evaluate.csv", ["name", "value"], result.items())
    return result


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="u2mfql", description="Two-timescale mean-field Q-learning on the LQ benchmark.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="config file or shipped name (benchmark_mfg, benchmark_mfc)")
        sp.add_argument("--output-dir", default=None, help="output root (overrides config and $U2MFQL_OUTPUT)")

    sp = sub.add_parser("solve-benchmark", help="write the analytic solution tables")
    common(sp)

    sp = sub.add_parser("train", help="run the learner for n_runs seeds")
    common(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")

    sp = sub.add_parser("iterate", help="run the synchronous two-timescale scheme on a table MDP")
    common(sp)
    sp.add_argument("--mdp", default="toy_coordination", help="MDP JSON file or shipped name")
    sp.add_argument("--regime", choices=("mfg", "mfc"), default=None, help="default: from the config exponents")
    sp.add_argument("--iters", type=int, default=100_000)
    sp.add_argument("--stochastic", action="store_true")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--stop-tol", type=float, default=None, help="stop once both residuals are below this")
    sp.add_argument("--freeze", type=float, default=None,
                    help="evaluate the cost at this fixed statistic value (mu-independent variant)")

    sp = sub.add_parser("evaluate", help="recompute metrics from a checkpoint")
    common(sp)
    sp.add_argument("checkpoint")
    return p


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(output_dir=args.output_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
        out = cfg.output_root()
        if args.command == "solve-benchmark":
            scalars = solve_benchmark(cfg, out)
            for k, v in scalars.items():
                print(f"{k} = {_fmt(v)}")
        elif args.command == "train":
            cfg = cfg.with_overrides(seed=args.seed, n_runs=args.runs, n_episodes=args.episodes)
            if args.jobs is not None and args.jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            results = run_training(cfg, out, args.jobs)
            grid = cfg.grid()
            for r in results:
                print(f"run {r.index} seed {r.seed}: {r.episodes} episodes ({r.reason}), "
                      f"trailing mean {distribution_mean(r.mu_avg, grid):.4f}")
        elif args.command == "iterate":
            regime = args.regime or cfg.regime
            if args.iters < 1:
                raise ConfigError("--iters must be at least 1")
            res = run_iterate(args.mdp, regime, args.iters, out, args.stochastic,
                              cfg.seed if args.seed is None else args.seed, args.freeze, args.stop_tol, cfg)
            print(f"{regime}: {len(res.resid_T)} iterations, final resid_T {res.resid_T[-1]:.3e}, "
                  f"resid_P {res.resid_P[-1]:.3e}, mu {np.array2string(res.state.mu, precision=6)}")
        elif args.command == "evaluate":
            result = evaluate_checkpoint(cfg, args.checkpoint, out)
            for k, v in result.items():
                print(f"{k} = {_fmt(v)}")
    except (ConfigError, CheckpointError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
