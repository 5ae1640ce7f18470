"""Per-user traffic loads, caching cost and utility.

All quantities are expectations per request under a fixed mean-field state;
nothing here recomputes ``P_f`` or ``N_f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UserParams:
    cache_cost_coefficient: float = 1.0   # alpha_u, per squared storage unit
    storage_capacity: float = 3.0         # c_u
    local_unit_cost: float = 0.01         # omega_L
    d2d_unit_cost: float = 2.0            # omega_D
    cellular_unit_cost: float = 10.0      # omega_B
    d2d_reward: float = 1.5               # r, net of output transmission cost
    privacy_price: float = 0.1            # theta
    d2d_energy_per_unit: float = 0.7      # e
    energy_budget: float = 75.0           # E

    def __post_init__(self):
        if not self.cache_cost_coefficient > 0:
            raise ValueError("cache_cost_coefficient must be strictly positive")
        if self.storage_capacity < 0:
            raise ValueError("storage_capacity must be nonnegative")
        for name in ("local_unit_cost", "d2d_unit_cost", "cellular_unit_cost", "d2d_reward",
                     "privacy_price", "d2d_energy_per_unit", "energy_budget"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.local_unit_cost < self.d2d_unit_cost < self.cellular_unit_cost:
            raise ValueError("unit costs must satisfy local < d2d < cellular")

    @property
    def net_reward(self) -> float:
        """Reward per unit of served D2D traffic after the privacy price."""
        return self.d2d_reward - self.privacy_price


@dataclass(frozen=True)
class UserType:
    """A group of users sharing one parameter set."""

    params: UserParams
    count: int
    name: str = "default"

    def __post_init__(self):
        if int(self.count) < 1:
            raise ValueError("user type count must be a positive integer")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class LoadBreakdown:
    local: float
    d2d_in: float
    cellular: float
    d2d_out: float

    def transmission_cost(self, params: UserParams) -> float:
        return (self.local * params.local_unit_cost + self.d2d_in * params.d2d_unit_cost
                + self.cellular * params.cellular_unit_cost)


def as_strategy(x, file_count=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("a strategy is a 1-D vector of caching probabilities")
    if file_count is not None and x.size != file_count:
        raise ValueError(f"strategy has {x.size} entries, expected {file_count}")
    if np.any(np.isnan(x)) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("caching probabilities must lie in [0, 1]")
    return x


def local_load(x, catalog):
    x = as_strategy(x, catalog.file_count)
    return float(np.sum(x * catalog.popularity * catalog.sizes))


def d2d_in_load(x, catalog, state):
    x = as_strategy(x, catalog.file_count)
    return float(np.sum((1.0 - x) * state.hit_probability * catalog.popularity * catalog.sizes))


def cellular_load(x, catalog, state):
    x = as_strategy(x, catalog.file_count)
    return float(np.sum((1.0 - x) * (1.0 - state.hit_probability)
                        * catalog.popularity * catalog.sizes))


def d2d_out_load(x, catalog, state):
    x = as_strategy(x, catalog.file_count)
    return float(np.sum(x * state.expected_requesters * catalog.sizes))


def cache_cost(x, catalog, params):
    x = as_strategy(x, catalog.file_count)
    return float(np.sum((x * catalog.sizes) ** 2) * params.cache_cost_coefficient)


def loads(x, catalog, state):
    return LoadBreakdown(
        local=local_load(x, catalog),
        d2d_in=d2d_in_load(x, catalog, state),
        cellular=cellular_load(x, catalog, state),
        d2d_out=d2d_out_load(x, catalog, state),
    )


def utility(x, catalog, state, params):
    """Reward for serving others minus caching, transmission and privacy costs."""
    t = loads(x, catalog, state)
    return (t.d2d_out * params.d2d_reward
            - cache_cost(x, catalog, params)
            - t.local * params.local_unit_cost
            - t.d2d_in * params.d2d_unit_cost
            - t.cellular * params.cellular_unit_cost
            - t.d2d_out * params.privacy_price)


def marginal_gain(catalog, state, params):
    """Per-unit-size linear coefficient of the utility in each ``x_f``.

    The utility is ``sum_f s_f x_f g_f - alpha sum_f (x_f s_f)^2 + const``;
    this returns ``g``.
    """
    q, P, N = catalog.popularity, state.hit_probability, state.expected_requesters
    return (N * params.net_reward - q * params.local_unit_cost
            + P * q * params.d2d_unit_cost + (1.0 - P) * q * params.cellular_unit_cost)


def utility_gradient(x, catalog, state, params):
    x = as_strategy(x, catalog.file_count)
    s = catalog.sizes
    return s * marginal_gain(catalog, state, params) - 2.0 * params.cache_cost_coefficient * s * s * x
