"""Flat key = value experiment configuration."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

from .core import ActionGrid, Discount, StateGrid
from .envs import TRANSITION_VARIANTS, LQParams
from .errors import ConfigError
from .learner import MFC_OMEGAS, MFG_OMEGAS, TrainConfig

OUTPUT_ENV = "U2MFQL_OUTPUT"
DEFAULT_OUTPUT = "results"
SHIPPED = ("benchmark_mfg", "benchmark_mfc")


@dataclass(frozen=True)
class ExperimentConfig:
    c1: float = 0.25
    c2: float = 1.5
    c3: float = 0.5
    c4: float = 0.6
    c5: float = 5.0
    beta: float = 1.0
    sigma: float = 0.3
    dt: float = 0.01
    horizon: float = 20.0
    x_center: float = 0.5
    half_width: float = 2.0
    grid_step: float = 0.1
    action_min: float = -1.0
    action_max: float = 1.0
    action_step: float = 0.1
    epsilon: float = 0.15
    omega_q: float = MFG_OMEGAS[0]
    omega_mu: float = MFG_OMEGAS[1]
    tol_mu: float = 0.0
    tol_q: float = 0.0
    n_episodes: int = 80_000
    n_runs: int = 10
    seed: int = 0
    metrics_stride: int = 100
    output_dir: str | None = None
    transition_variant: str = "euler"

    def __post_init__(self):
        try:
            validate(self)
        except ConfigError:
            raise
        except ValueError as exc:  # raised by the domain constructors
            raise ConfigError(str(exc)) from exc

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def mode_label(self) -> str:
        pair = (self.omega_q, self.omega_mu)
        if pair == MFG_OMEGAS:
            return "mfg"
        if pair == MFC_OMEGAS:
            return "mfc"
        return "custom"

    @property
    def regime(self) -> str:
        return "mfg" if self.omega_mu > self.omega_q else "mfc"

    def params(self) -> LQParams:
        return LQParams(self.c1, self.c2, self.c3, self.c4, self.c5, self.beta, self.sigma, self.dt)

    def grid(self) -> StateGrid:
        return StateGrid(self.x_center, self.half_width, self.grid_step)

    def agrid(self) -> ActionGrid:
        return ActionGrid(self.action_min, self.action_max, self.action_step)

    def discount(self) -> Discount:
        return Discount(self.beta, self.dt)

    def train_config(self, run_index: int = 0) -> TrainConfig:
        return TrainConfig(
            n_episodes=self.n_episodes,
            steps_per_episode=self.steps_per_episode,
            epsilon=self.epsilon,
            omega_q=self.omega_q,
            omega_mu=self.omega_mu,
            tol_mu=self.tol_mu,
            tol_q=self.tol_q,
            seed=self.seed + run_index,
            mode_label=self.mode_label,
        )

    def output_root(self) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
KEYS = tuple(_TYPES)


def _need(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


def validate(cfg: ExperimentConfig) -> None:
    for key in KEYS:
        v = getattr(cfg, key)
        if isinstance(v, float):
            _need(math.isfinite(v), key, "must be finite")
    for key in ("c1", "c3", "c5"):
        _need(getattr(cfg, key) >= 0, key, "must be nonnegative")
    for key in ("beta", "sigma", "dt", "horizon", "grid_step", "action_step"):
        _need(getattr(cfg, key) > 0, key, "must be positive")
    _need(cfg.half_width > 0, "half_width", "must be positive")
    _need(cfg.action_max >= cfg.action_min, "action_max", "must not be below action_min")
    steps = cfg.horizon / cfg.dt
    _need(abs(steps - round(steps)) <= 1e-9 * steps and round(steps) >= 1, "horizon", "must be a positive multiple of dt")
    gamma = math.exp(-cfg.beta * cfg.dt)
    _need(0.0 < gamma < 1.0, "beta", "discount exp(-beta dt) must lie in (0, 1)")
    _need(0.0 <= cfg.epsilon <= 1.0, "epsilon", "must lie in [0, 1]")
    _need(0.5 < cfg.omega_q < 1.0, "omega_q", "must lie in (0.5, 1)")
    _need(cfg.omega_mu > 0, "omega_mu", "must be positive")
    _need(cfg.tol_mu >= 0, "tol_mu", "must be nonnegative")
    _need(cfg.tol_q >= 0, "tol_q", "must be nonnegative")
    _need(cfg.n_episodes >= 1, "n_episodes", "must be at least 1")
    _need(cfg.n_runs >= 1, "n_runs", "must be at least 1")
    _need(cfg.seed >= 0, "seed", "must be nonnegative")
    _need(cfg.metrics_stride >= 1, "metrics_stride", "must be at least 1")
    _need(cfg.transition_variant in TRANSITION_VARIANTS, "transition_variant",
          f"must be one of {', '.join(TRANSITION_VARIANTS)}")
    # grids must be constructible
    try:
        StateGrid(cfg.x_center, cfg.half_width, cfg.grid_step)
    except ValueError as exc:
        raise ConfigError(f"grid_step: {exc}") from exc
    try:
        ActionGrid(cfg.action_min, cfg.action_max, cfg.action_step)
    except ValueError as exc:
        raise ConfigError(f"action_step: {exc}") from exc


def _convert(key: str, raw: str, lineno: int):
    kind = _TYPES[key]
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if key == "output_dir":
            return text or None
        return text
    except ValueError:
        raise ConfigError(f"line {lineno}: {key}: cannot parse {text!r} as {kind}") from None


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, lineno)
    return ExperimentConfig(**values)


def resolve_config_path(path: str | os.PathLike) -> Path:
    """A filesystem path, or the name of a configuration shipped with the package."""
    p = Path(path)
    if p.exists():
        return p
    if str(path) in SHIPPED:
        return Path(str(resources.files("u2mfql") / "configs" / str(path)))
    raise ConfigError(f"configuration file not found: {path}")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text)
