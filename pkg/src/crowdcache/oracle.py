"""Monte Carlo encounter-graph simulation at finite population size.

Each trial realises the probabilistic model literally: independent
Bernoulli cache placements, one Zipf request per user, an Erdos-Renyi
encounter graph, and uniform choice of the serving neighbour. The
empirical hit probability and per-cacher service counts are compared with
the mean-field closed forms elsewhere.

Trial ``i`` always draws from the ``i``-th child of ``SeedSequence(seed)``,
so results do not depend on how trials are split across workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

MODES = ("counts", "graph")


@dataclass
class TrialOutcome:
    empirical_hit: np.ndarray          # P-hat per file
    hit_se: np.ndarray
    hit_samples: np.ndarray            # non-local requests per file
    empirical_requesters: np.ndarray   # N-hat per file
    requesters_se: np.ndarray
    empirical_loads: dict
    trial_count: int
    seed: int
    requests: np.ndarray               # (trials, 3): local, d2d, cellular counts
    storage_exceedance: float = float("nan")
    mode: str = "counts"


def edge_sampling(population, encounter_probability, seed=None):
    """Symmetric boolean adjacency of a G(U, rho) encounter graph."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    U = int(population)
    upper = np.triu(rng.random((U, U)) < encounter_probability, k=1)
    return upper | upper.T


def expand_profile(profile, counts=None):
    """One strategy row per user from a per-type profile."""
    X = np.atleast_2d(np.asarray(profile, dtype=float))
    if counts is None:
        return X
    return np.repeat(X, np.asarray(counts, dtype=int), axis=0)


def _trial(args):
    X, q, sizes, rho, seed_seq, mode, capacity = args
    rng = np.random.default_rng(seed_seq)
    U, F = X.shape
    cached = rng.random((U, F)) < X
    req = rng.choice(F, size=U, p=q)
    users = np.arange(U)
    local = cached[users, req]
    cachers = cached.sum(axis=0)
    hit = np.zeros(U, dtype=bool)
    served = np.zeros(F, dtype=np.int64)
    if mode == "counts":
        # a non-local requester is not itself a cacher of the file, so every
        # cacher of it is a distinct potential neighbour
        k = rng.binomial(cachers[req], rho)
        hit = ~local & (k > 0)
        np.add.at(served, req[hit], 1)
    else:
        adj = edge_sampling(U, rho, rng)
        for u in np.flatnonzero(~local):
            f = req[u]
            servers = np.flatnonzero(adj[u] & cached[:, f])
            # which server answers does not change any per-file total
            if servers.size:
                hit[u] = True
                served[f] += 1
    nonlocal_req = np.bincount(req[~local], minlength=F)
    hits = np.bincount(req[hit], minlength=F)
    local_req = np.bincount(req[local], minlength=F)
    exceed = 0
    if capacity is not None:
        exceed = int(np.sum(cached @ sizes > capacity + 1e-12))
    n_local = int(local.sum())
    n_d2d = int(hit.sum())
    counts = (n_local, n_d2d, U - n_local - n_d2d)
    return local_req, nonlocal_req, hits, served, cachers, counts, exceed


def simulate(profile, catalog, mobility, trials, seed=0, counts=None, mode="counts",
             capacity=None, workers=1):
    """Run ``trials`` independent realisations of one request per user.

    Parameters
    ----------
    profile : array_like
        ``(U, F)`` per-user caching probabilities, or per-type rows with ``counts``.
    trials : int
        Number of independent trials; each contributes ``U`` requests.
    mode : {"counts", "graph"}
        ``counts`` draws each requester's number of caching neighbours as
        Binomial(cachers, rho); ``graph`` materialises the whole encounter graph.
    capacity : float or array_like, optional
        Storage capacity per user, used only for the exceedance diagnostic.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    X = expand_profile(profile, counts)
    U, F = X.shape
    if U != mobility.population:
        raise ValueError(f"profile has {U} users but mobility population is {mobility.population}")
    if U < 2:
        raise ValueError("simulation needs at least two users")
    if F != catalog.file_count:
        raise ValueError("profile and catalog disagree on the number of files")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("caching probabilities must lie in [0, 1]")
    cap = None if capacity is None else np.broadcast_to(np.asarray(capacity, dtype=float), (U,))
    children = np.random.SeedSequence(int(seed)).spawn(trials)
    jobs = [(X, catalog.popularity, catalog.sizes, mobility.encounter_probability, c, mode, cap)
            for c in children]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_trial(j) for j in jobs]
    return _summarise(results, catalog, U, int(seed), mode, cap is not None)


def _summarise(results, catalog, U, seed, mode, capacity_given=False):
    T = len(results)
    local_req = np.sum([r[0] for r in results], axis=0)
    nonlocal_req = np.sum([r[1] for r in results], axis=0)
    hits = np.sum([r[2] for r in results], axis=0)
    served_t = np.array([r[3] for r in results], dtype=float)
    cachers_t = np.array([r[4] for r in results], dtype=float)
    req_counts = np.array([r[5] for r in results], dtype=np.int64)
    exceed = sum(r[6] for r in results)

    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = hits / nonlocal_req
        # Agresti-Coull: the plain binomial SE collapses to 0 when p_hat is 0 or 1
        p_adj = (hits + 2.0) / (nonlocal_req + 4.0)
        p_se = np.where(nonlocal_req > 0, np.sqrt(p_adj * (1.0 - p_adj) / (nonlocal_req + 4.0)), np.nan)
        served, cach = served_t.sum(axis=0), cachers_t.sum(axis=0)
        n_hat = served / cach
        # ratio estimator standard error across trials (delta method)
        if T > 1:
            resid = served_t - n_hat[None, :] * cachers_t
            n_se = np.sqrt((resid ** 2).sum(axis=0) / (T * (T - 1))) / cachers_t.mean(axis=0)
        else:
            n_se = np.full(served.shape, np.nan)
    s = catalog.sizes
    total = U * T
    loads = {
        "local": float(local_req @ s) / total,
        "d2d_in": float(hits @ s) / total,
        "cellular": float((nonlocal_req - hits) @ s) / total,
        "d2d_out": float(served @ s) / total,
    }
    return TrialOutcome(
        empirical_hit=p_hat,
        hit_se=p_se,
        hit_samples=nonlocal_req,
        empirical_requesters=n_hat,
        requesters_se=n_se,
        empirical_loads=loads,
        trial_count=T,
        seed=seed,
        requests=req_counts,
        storage_exceedance=exceed / total if capacity_given else float("nan"),
        mode=mode,
    )
