"""Access policies for cognitive secondary users sharing a channel with a HARQ primary user."""
from .centralized import CentralizedSolution, build_model, solve_centralized, upper_bound
from .config import ConfigError, RateGrid, ScenarioConfig, load_config
from .decentralized import LocalPolicy, NashResult, nash_solve
from .kernels import BACKEND
from .markov import JointPolicy, StateSpace
from .simulator import SimReport, simulate

__all__ = [
    "BACKEND", "CentralizedSolution", "ConfigError", "JointPolicy", "LocalPolicy", "NashResult",
    "RateGrid", "ScenarioConfig", "SimReport", "StateSpace", "build_model", "load_config",
    "nash_solve", "simulate", "solve_centralized", "upper_bound",
]
