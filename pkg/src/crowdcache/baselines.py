"""Reference caching policies: most-popular and random-uniform caching."""

import numpy as np


def mpc_strategy(catalog, params):
    """Fill storage with the most popular files; the first misfit gets the remainder."""
    x = np.zeros(catalog.file_count)
    room = float(params.storage_capacity)
    for f in catalog.rank_order():
        if room <= 0:
            break
        take = min(1.0, room / catalog.sizes[f])
        x[f] = take
        room -= take * catalog.sizes[f]
    return x


def ruc_strategy(catalog, params):
    """Cache every file with the same probability, filling storage in expectation."""
    frac = min(1.0, params.storage_capacity / float(catalog.sizes.sum()))
    return np.full(catalog.file_count, frac)


def energy_violation(x, catalog, state, params):
    """Amount by which a (non-optimising) policy overshoots the D2D energy budget."""
    used = params.d2d_energy_per_unit * float(np.sum(x * state.expected_requesters * catalog.sizes))
    return max(0.0, used - params.energy_budget)
