"""Two-timescale mean-field Q-learning for games and control on finite and LQ models."""

from .config import ExperimentConfig, load_config
from .core import ActionGrid, Discount, QTable, StateGrid
from .envs import FiniteEnv, LQEnv, LQParams, TableMdp, load_mdp
from .learner import TrainConfig, TrainState, init_train, run_episode, train
from .oracle import solve, solve_amfc, solve_amfg

__version__ = "0.1.0"

__all__ = [
    "ActionGrid",
    "Discount",
    "ExperimentConfig",
    "FiniteEnv",
    "LQEnv",
    "LQParams",
    "QTable",
    "StateGrid",
    "TableMdp",
    "TrainConfig",
    "TrainState",
    "init_train",
    "load_config",
    "load_mdp",
    "run_episode",
    "solve",
    "solve_amfc",
    "solve_amfg",
    "train",
]
