"""Damped best-response iteration to the caching equilibrium.

Each round every user type best-responds to the mean-field state of the
current profile, and the profile moves a fraction ``1 - gamma`` of the way
toward those best responses. Users of one type are interchangeable, so the
profile is stored as one strategy row per type rather than one per user.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from crowdcache.best_response import best_response
from crowdcache.meanfield import build_state
from crowdcache.user_model import utility, utility_gradient

logger = logging.getLogger(__name__)

NORMS = ("max", "frobenius")


@dataclass(frozen=True)
class EvolutionConfig:
    damping: float = 0.98
    tolerance: float = 1e-6
    max_iterations: int = 10000
    norm: str = "max"
    gap_every: int = 0  # also certify every k iterations; 0 = final iterate only

    def __post_init__(self):
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie strictly between 0 and 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be a positive integer")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if int(self.gap_every) < 0:
            raise ValueError("gap_every must be nonnegative")


@dataclass
class TrajectoryRecord:
    iteration: int
    step_norm: float
    eta: np.ndarray
    utilities: np.ndarray
    equilibrium_gap: float | None = None


@dataclass
class EquilibriumResult:
    profile: np.ndarray          # (types, F)
    counts: np.ndarray
    mean_field: object
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list)
    equilibrium_gap: float = float("nan")
    damping: float = float("nan")
    certification_tolerance: float = float("nan")

    @property
    def certified(self) -> bool:
        """Converged and no user type gains more than the residual allows."""
        return self.converged and self.equilibrium_gap <= self.certification_tolerance

    @property
    def eta(self) -> np.ndarray:
        return self.mean_field.cache_fraction

    @property
    def final_step_norm(self) -> float:
        return self.trajectory[-1].step_norm if self.trajectory else float("nan")


def _norm(delta, kind):
    if kind == "max":
        return float(np.max(np.abs(delta)))
    return float(np.linalg.norm(delta))


def _check_population(population, mobility):
    population = list(population)
    if not population:
        raise ValueError("population needs at least one user type")
    counts = np.array([t.count for t in population], dtype=float)
    if int(counts.sum()) != mobility.population:
        raise ValueError(
            f"user type counts sum to {int(counts.sum())} but mobility population is "
            f"{mobility.population}")
    return population, counts


def best_response_profile(profile, population, catalog, state):
    return np.stack([best_response(catalog, state, t.params).strategy for t in population])


def equilibrium_gap(profile, catalog, mobility, population):
    """Largest utility gain any user type gets from deviating unilaterally."""
    population, counts = _check_population(population, mobility)
    X = np.atleast_2d(np.asarray(profile, dtype=float))
    state = build_state(X, mobility, catalog, counts)
    gap = 0.0
    for row, t in zip(X, population):
        br = best_response(catalog, state, t.params)
        gap = max(gap, br.utility_value - utility(row, catalog, state, t.params))
    return max(gap, 0.0)


def certification_tolerance(profile, population, catalog, state, tolerance, damping):
    """Largest unilateral gain compatible with a converged damped step.

    A step of size ``tol`` means ``|BR(X) - X|_max <= tol / (1 - gamma)``, and
    by concavity the gain from moving to ``BR`` is at most
    ``grad U(x) . (BR - x) <= |grad U(x)|_1 |BR - x|_max``.
    """
    bound = 0.0
    for row, t in zip(np.atleast_2d(profile), population):
        g = utility_gradient(row, catalog, state, t.params)
        bound = max(bound, float(np.abs(g).sum()))
    return bound * tolerance / (1.0 - damping)


def evolve(population, catalog, mobility, config=None, initial=None):
    """Run the damped best-response loop from the all-zero profile."""
    config = config or EvolutionConfig()
    population, counts = _check_population(population, mobility)
    gamma = config.damping
    X = (np.zeros((len(population), catalog.file_count)) if initial is None
         else np.array(np.atleast_2d(initial), dtype=float))
    if X.shape != (len(population), catalog.file_count):
        raise ValueError("initial profile must have one row per user type")
    state = build_state(X, mobility, catalog, counts)
    trajectory = []
    converged = False
    it = 0
    for it in range(1, int(config.max_iterations) + 1):
        br = best_response_profile(X, population, catalog, state)
        X_next = gamma * X + (1.0 - gamma) * br
        step = _norm(X_next - X, config.norm)
        X = X_next
        state = build_state(X, mobility, catalog, counts)
        utils = np.array([utility(row, catalog, state, t.params) for row, t in zip(X, population)])
        rec = TrajectoryRecord(it, step, state.cache_fraction.copy(), utils)
        if config.gap_every and it % config.gap_every == 0:
            rec.equilibrium_gap = equilibrium_gap(X, catalog, mobility, population)
        trajectory.append(rec)
        if step <= config.tolerance:
            converged = True
            break
    gap = equilibrium_gap(X, catalog, mobility, population)
    trajectory[-1].equilibrium_gap = gap
    if not converged:
        logger.warning("no convergence after %d iterations (gamma=%g, last step %.3g)",
                       it, gamma, trajectory[-1].step_norm)
    return EquilibriumResult(
        profile=X,
        counts=counts,
        mean_field=state,
        iterations=it,
        converged=converged,
        trajectory=trajectory,
        equilibrium_gap=gap,
        damping=gamma,
        certification_tolerance=certification_tolerance(
            X, population, catalog, state, config.tolerance, gamma),
    )


def gamma_scan(population, catalog, mobility, gammas, config=None):
    """Run ``evolve`` once per damping factor; returns ``[(gamma, result), ...]``."""
    config = config or EvolutionConfig()
    out = []
    for g in gammas:
        cfg = EvolutionConfig(damping=g, tolerance=config.tolerance,
                              max_iterations=config.max_iterations, norm=config.norm,
                              gap_every=config.gap_every)
        out.append((g, evolve(population, catalog, mobility, cfg)))
    return out
