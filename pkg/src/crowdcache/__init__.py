"""Evolutionary-game equilibrium of probabilistic D2D content caching."""

from crowdcache.catalog import ContentCatalog, zipf_popularity
from crowdcache.meanfield import MeanFieldState, MobilityModel, build_state
from crowdcache.user_model import UserParams, UserType
from crowdcache.best_response import BestResponseSolution
from crowdcache.dynamics import EquilibriumResult, EvolutionConfig, evolve, equilibrium_gap
from crowdcache.baselines import mpc_strategy, ruc_strategy

__all__ = [
    "ContentCatalog",
    "zipf_popularity",
    "MeanFieldState",
    "MobilityModel",
    "build_state",
    "UserParams",
    "UserType",
    "BestResponseSolution",
    "EquilibriumResult",
    "EvolutionConfig",
    "evolve",
    "equilibrium_gap",
    "mpc_strategy",
    "ruc_strategy",
]

__version__ = "0.1.0"
