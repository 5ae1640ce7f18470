"""Large-population (mean-field) encounter quantities.

Every user meets every other user independently with probability ``rho``;
with ``U`` users the mean neighbour count is ``psi = U * rho``. Given the
fraction ``eta_f`` of users caching file ``f`` the limiting forms are::

    P_f   = 1 - exp(-eta_f psi)                    # >= 1 caching neighbour
    P^C_f = (1 - exp(-eta_f psi)) / (eta_f psi)    # chance a given cacher is picked
    N_f   = (1 - eta_f) / eta_f * q_f * P_f        # requesters served per cacher
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this argument the removable singularities are evaluated by series
SMALL_ARGUMENT = 1e-6


@dataclass(frozen=True)
class MobilityModel:
    population: int
    encounter_probability: float

    def __post_init__(self):
        if int(self.population) < 1:
            raise ValueError("population must be a positive integer")
        if not 0.0 <= self.encounter_probability <= 1.0:
            raise ValueError("encounter_probability must lie in [0, 1]")
        object.__setattr__(self, "population", int(self.population))
        object.__setattr__(self, "encounter_probability", float(self.encounter_probability))

    @classmethod
    def from_mean_neighbors(cls, population, mean_neighbors):
        return cls(population, mean_neighbors / population)

    @property
    def mean_neighbors(self) -> float:
        return self.population * self.encounter_probability


@dataclass(frozen=True)
class MeanFieldState:
    cache_fraction: np.ndarray
    hit_probability: np.ndarray
    selection_probability: np.ndarray
    expected_requesters: np.ndarray
    mean_neighbors: float

    @property
    def file_count(self) -> int:
        return int(self.cache_fraction.size)


def _check_unit(name, value):
    value = np.asarray(value, dtype=float)
    if np.any(value < 0) or np.any(value > 1) or np.any(np.isnan(value)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return value


def _check_psi(psi):
    psi = float(psi)
    if psi < 0 or np.isnan(psi):
        raise ValueError("mean neighbour count must be nonnegative")
    return psi


def cache_fraction(profile, counts=None):
    """Population-average caching probability of each file.

    ``profile`` is an ``(n, F)`` array of per-user (or per-type) strategies;
    ``counts`` optionally weights each row by the number of users sharing it.
    """
    X = np.atleast_2d(np.asarray(profile, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty population")
    _check_unit("profile entries", X)
    if counts is None:
        return X.mean(axis=0)
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (X.shape[0],) or np.any(counts < 0) or counts.sum() <= 0:
        raise ValueError("counts must be nonnegative, one per profile row, not all zero")
    return counts @ X / counts.sum()


def _one_minus_exp_over(z):
    """(1 - exp(-z)) / z with the z -> 0 limit filled in."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < SMALL_ARGUMENT
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs * zs / 6.0
    zl = z[~small]
    out[~small] = -np.expm1(-zl) / zl
    return out


def hit_probability(eta, psi):
    """Chance that a requester meets at least one user caching the file."""
    eta = _check_unit("cache fraction", eta)
    psi = _check_psi(psi)
    out = -np.expm1(-eta * psi)
    return out if out.ndim else float(out)


def selection_probability(eta, psi):
    """Chance that one particular caching neighbour is the one chosen to serve."""
    eta = _check_unit("cache fraction", eta)
    psi = _check_psi(psi)
    out = _one_minus_exp_over(eta * psi)
    return out if out.ndim else float(out)


def expected_requesters(eta, psi, popularity):
    """Mean number of requests for a file served by each user caching it.

    Written as ``(1 - eta) q psi P^C`` which equals the textbook
    ``(1 - eta)/eta q (1 - exp(-eta psi))`` and stays finite at ``eta = 0``.
    """
    eta = _check_unit("cache fraction", eta)
    q = _check_unit("popularity", popularity)
    psi = _check_psi(psi)
    out = (1.0 - eta) * q * psi * _one_minus_exp_over(eta * psi)
    return out if out.ndim else float(out)


def build_state(profile, mobility, catalog, counts=None):
    """Mean-field state induced by a population profile.

    ``profile`` may be a single strategy vector (homogeneous population),
    an ``(n, F)`` matrix, or a matrix of per-type strategies with ``counts``.
    """
    eta = cache_fraction(profile, counts)
    if eta.shape != (catalog.file_count,):
        raise ValueError(
            f"profile covers {eta.size} files but catalog has {catalog.file_count}")
    return state_from_fraction(eta, mobility.mean_neighbors, catalog.popularity)


def state_from_fraction(eta, psi, popularity):
    eta = np.array(eta, dtype=float)
    return MeanFieldState(
        cache_fraction=eta,
        hit_probability=np.atleast_1d(hit_probability(eta, psi)),
        selection_probability=np.atleast_1d(selection_probability(eta, psi)),
        expected_requesters=np.atleast_1d(expected_requesters(eta, psi, popularity)),
        mean_neighbors=float(psi),
    )


def state_from_arrays(hit_probability, expected_requesters):
    """State with externally fixed ``P`` and ``N`` (for tests and what-if studies)."""
    P = np.atleast_1d(np.asarray(hit_probability, dtype=float))
    N = np.atleast_1d(np.asarray(expected_requesters, dtype=float))
    if P.shape != N.shape:
        raise ValueError("P and N must have the same shape")
    return MeanFieldState(
        cache_fraction=np.full(P.shape, np.nan),
        hit_probability=P,
        selection_probability=np.full(P.shape, np.nan),
        expected_requesters=N,
        mean_neighbors=float("nan"),
    )
