"""Per-user utility maximisation under storage and D2D-energy budgets.

With the mean-field state held fixed the utility is a separable, strictly
concave quadratic in the caching probabilities, so the KKT conditions give
the primal in closed form for any pair of multipliers::

    x_f(lam, mu) = clip((g_f - lam - mu e N_f) / (2 alpha s_f), 0, 1)

The storage multiplier is found exactly by searching the breakpoints of the
piecewise-linear storage map; the energy multiplier by bisection on the
(monotone) energy use with the storage multiplier re-solved at every probe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np

from crowdcache.user_model import marginal_gain, utility, utility_gradient

FEASIBILITY_TOL = 1e-9
SLACKNESS_TOL = 1e-6


class BestResponseError(RuntimeError):
    """Dual search failed to meet its tolerance; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class BestResponseSolution:
    strategy: np.ndarray
    utility_value: float
    storage_multiplier: float
    energy_multiplier: float
    active_constraints: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Problem:
    gain: np.ndarray       # g_f
    curvature: np.ndarray  # 2 alpha s_f
    sizes: np.ndarray
    energy_rate: np.ndarray  # e N_f s_f, energy per unit of x_f
    capacity: float
    budget: float

    @classmethod
    def build(cls, catalog, state, params):
        N = state.expected_requesters
        if N.shape != catalog.sizes.shape:
            raise ValueError("mean-field state and catalog disagree on the number of files")
        return cls(
            gain=marginal_gain(catalog, state, params),
            curvature=2.0 * params.cache_cost_coefficient * catalog.sizes,
            sizes=catalog.sizes,
            energy_rate=params.d2d_energy_per_unit * N * catalog.sizes,
            capacity=params.storage_capacity,
            budget=params.energy_budget,
        )

    def primal(self, lam, mu):
        # energy_rate / s_f == e N_f
        return np.clip((self.gain - lam - mu * self.energy_rate / self.sizes) / self.curvature, 0.0, 1.0)

    def storage(self, x):
        return float(self.sizes @ x)

    def energy(self, x):
        return float(self.energy_rate @ x)


def stationarity_point(f, lam, mu, catalog, state, params):
    """Clipped maximiser of the Lagrangian in coordinate ``f``."""
    prob = _Problem.build(catalog, state, params)
    return float(prob.primal(lam, mu)[f])


def _solve_storage(prob, mu):
    """Smallest ``lam >= 0`` whose primal meets the storage budget."""
    b = prob.gain - mu * prob.energy_rate / prob.sizes
    x0 = prob.primal(0.0, mu)
    if prob.storage(x0) <= prob.capacity:
        return 0.0
    # storage(lam) is piecewise linear with kinks where some x_f reaches 0 or 1
    kinks = np.concatenate([b, b - prob.curvature])
    kinks = np.unique(kinks[kinks > 0.0])
    used = np.clip((b[None, :] - kinks[:, None]) / prob.curvature[None, :], 0.0, 1.0) @ prob.sizes
    idx = int(np.searchsorted(-used, -prob.capacity, side="left"))
    # used[idx] <= capacity < used[idx - 1]
    hi = kinks[idx]
    lo = kinks[idx - 1] if idx > 0 else 0.0
    used_lo = used[idx - 1] if idx > 0 else prob.storage(x0)
    used_hi = used[idx]
    if used_lo == used_hi:
        return float(hi)
    t = (used_lo - prob.capacity) / (used_lo - used_hi)
    return float(lo + t * (hi - lo))


def _solve(prob, max_bisections=200):
    mu = 0.0
    lam = _solve_storage(prob, mu)
    x = prob.primal(lam, mu)
    if prob.energy(x) <= prob.budget:
        return x, lam, mu
    cost_per_energy = prob.energy_rate / prob.sizes
    active = cost_per_energy > 0
    lo, hi = 0.0, float(np.max(prob.gain[active] / cost_per_energy[active]))
    hi = max(hi, 0.0) * (1.0 + 1e-12) + 1e-300
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        lam_mid = _solve_storage(prob, mid)
        if prob.energy(prob.primal(lam_mid, mid)) > prob.budget:
            lo = mid
        else:
            hi = mid
    mu = hi
    lam = _solve_storage(prob, mu)
    x = prob.primal(lam, mu)
    if prob.energy(x) > prob.budget + FEASIBILITY_TOL * max(1.0, prob.budget):
        raise BestResponseError("energy multiplier search did not reach a feasible point", best=x)
    return x, lam, mu


def best_response(catalog, state, params):
    """Utility-maximising caching strategy against a fixed mean-field state."""
    prob = _Problem.build(catalog, state, params)
    x, lam, mu = _solve(prob)
    active = {
        "storage": prob.storage(x) >= prob.capacity - FEASIBILITY_TOL,
        "energy": prob.energy(x) >= prob.budget - FEASIBILITY_TOL,
        "lower": x <= 0.0,
        "upper": x >= 1.0,
    }
    return BestResponseSolution(
        strategy=x,
        utility_value=utility(x, catalog, state, params),
        storage_multiplier=lam,
        energy_multiplier=mu,
        active_constraints=active,
    )


def kkt_residuals(solution, catalog, state, params):
    """Scaled KKT violations of a candidate solution (all should be ~0)."""
    prob = _Problem.build(catalog, state, params)
    x, lam, mu = solution.strategy, solution.storage_multiplier, solution.energy_multiplier
    grad = (utility_gradient(x, catalog, state, params)
            - lam * prob.sizes - mu * prob.energy_rate)
    # sign-restricted at the bounds, zero in the interior
    viol = np.where(x <= 0.0, np.maximum(grad, 0.0),
                    np.where(x >= 1.0, np.maximum(-grad, 0.0), np.abs(grad)))
    scale = max(1.0, float(np.max(np.abs(prob.gain * prob.sizes))))
    storage_used, energy_used = prob.storage(x), prob.energy(x)
    cap_scale, budget_scale = max(1.0, prob.capacity), max(1.0, prob.budget)
    return {
        "stationarity": float(np.max(viol)) / scale,
        "storage_feasibility": max(0.0, storage_used - prob.capacity) / cap_scale,
        "energy_feasibility": max(0.0, energy_used - prob.budget) / budget_scale,
        "box_feasibility": float(max(0.0, -x.min(), x.max() - 1.0)),
        "dual_feasibility": max(0.0, -lam, -mu),
        "storage_slackness": abs(lam * (prob.capacity - storage_used)) / (scale * cap_scale),
        "energy_slackness": abs(mu * (prob.budget - energy_used)) / (scale * budget_scale),
    }


def brute_force_best_response(catalog, state, params, grid_resolution=200):
    """Best feasible point of the uniform grid ``{0, 1/n, ..., 1}^F``.

    Exhaustive over the first ``F - 1`` coordinates; the last coordinate is
    maximised over its grid points in closed form (the objective is a concave
    parabola in it), which is exactly what enumerating it would give.
    Intended for ``F <= 4``.
    """
    F = catalog.file_count
    if F > 5:
        raise ValueError("exhaustive grid search is limited to F <= 5")
    n = int(grid_resolution)
    if n < 1:
        raise ValueError("grid_resolution must be positive")
    prob = _Problem.build(catalog, state, params)
    grid = np.linspace(0.0, 1.0, n + 1)
    g, s, a, w = prob.gain, prob.sizes, params.cache_cost_coefficient, prob.energy_rate

    def value(f, xf):
        return s[f] * xf * g[f] - a * (s[f] * xf) ** 2

    lead = F - 1
    looped = max(lead - 2, 0)
    vec = lead - looped
    best_val, best_x = -np.inf, None
    tol = 1e-12
    mesh = np.meshgrid(*([grid] * vec), indexing="ij")
    mesh = [m.ravel() for m in mesh]
    for outer in itertools.product(range(n + 1), repeat=looped):
        head = [np.full(mesh[0].size if vec else 1, grid[i]) for i in outer]
        cols = head + mesh if vec else head
        if not cols:
            cols = []
        m = cols[0].size if cols else 1
        val = np.zeros(m)
        used_s = np.zeros(m)
        used_e = np.zeros(m)
        for f, col in enumerate(cols):
            val += value(f, col)
            used_s += s[f] * col
            used_e += w[f] * col
        rem_s = prob.capacity - used_s
        rem_e = prob.budget - used_e
        ok = (rem_s >= -tol) & (rem_e >= -tol)
        if not np.any(ok):
            continue
        last = F - 1
        xmax = np.minimum(1.0, np.maximum(rem_s, 0.0) / s[last])
        if w[last] > 0:
            xmax = np.minimum(xmax, np.maximum(rem_e, 0.0) / w[last])
        kmax = np.floor(xmax * n + 1e-9).astype(int)
        # guard against the 1e-9 nudge pushing a grid point over the limit
        over = (s[last] * grid[kmax] > np.maximum(rem_s, 0.0) + tol) | (
            w[last] * grid[kmax] > np.maximum(rem_e, 0.0) + tol)
        kmax = np.where(over, kmax - 1, kmax)
        ok &= kmax >= 0
        kstar = g[last] / (2.0 * a * s[last]) * n
        cand = np.stack([np.clip(np.floor(kstar), 0, kmax), np.clip(np.ceil(kstar), 0, kmax)])
        cand = np.clip(cand, 0, None).astype(int)
        cvals = value(last, grid[cand])
        pick = np.argmax(cvals, axis=0)
        klast = cand[pick, np.arange(m)]
        total = np.where(ok, val + cvals[pick, np.arange(m)], -np.inf)
        j = int(np.argmax(total))
        if total[j] > best_val:
            best_val = total[j]
            best_x = np.array([c[j] for c in cols] + [grid[klast[j]]])
    return best_x


@numba.njit(cache=True)
def _dykstra(v, a1, b1, a2, b2, tol, max_sweeps):
    n = v.size
    x = v.copy()
    p0 = np.zeros(n)
    p1 = np.zeros(n)
    p2 = np.zeros(n)
    y = np.empty(n)
    aa1 = a1 @ a1
    aa2 = a2 @ a2
    for _ in range(max_sweeps):
        moved = 0.0
        # box
        for i in range(n):
            y[i] = x[i] + p0[i]
        for i in range(n):
            xn = min(max(y[i], 0.0), 1.0)
            pn = y[i] - xn
            moved = max(moved, abs(xn - x[i]), abs(pn - p0[i]))
            x[i] = xn
            p0[i] = pn
        # storage halfspace
        for i in range(n):
            y[i] = x[i] + p1[i]
        over = max(0.0, a1 @ y - b1) / aa1
        for i in range(n):
            xn = y[i] - over * a1[i]
            pn = y[i] - xn
            moved = max(moved, abs(xn - x[i]), abs(pn - p1[i]))
            x[i] = xn
            p1[i] = pn
        if aa2 > 0.0:
            for i in range(n):
                y[i] = x[i] + p2[i]
            over = max(0.0, a2 @ y - b2) / aa2
            for i in range(n):
                xn = y[i] - over * a2[i]
                pn = y[i] - xn
                moved = max(moved, abs(xn - x[i]), abs(pn - p2[i]))
                x[i] = xn
                p2[i] = pn
        # x alone can stall for a sweep while the increments still move
        if moved <= tol:
            break
    return x


def _project_feasible(v, prob, tol=1e-12, max_sweeps=1000000):
    """Euclidean projection onto the box and both budget halfspaces (Dykstra)."""
    x = _dykstra(np.asarray(v, dtype=float), prob.sizes, float(prob.capacity),
                 prob.energy_rate, float(prob.budget), tol, max_sweeps)
    return np.clip(x, 0.0, 1.0)


def projected_gradient_best_response(catalog, state, params, restarts=4, seed=0,
                                     max_iter=20000, tol=1e-11):
    """Multi-start projected gradient ascent; an independent check on the KKT solver."""
    prob = _Problem.build(catalog, state, params)
    step = 1.0 / (2.0 * params.cache_cost_coefficient * float(np.max(prob.sizes ** 2)))
    rng = np.random.default_rng(seed)
    best_x, best_val = None, -np.inf
    starts = [np.zeros(catalog.file_count)]
    starts += [rng.uniform(0.0, 1.0, catalog.file_count) for _ in range(max(restarts - 1, 0))]
    for x0 in starts:
        x = _project_feasible(x0, prob)
        for _ in range(max_iter):
            nxt = _project_feasible(x + step * utility_gradient(x, catalog, state, params), prob)
            done = np.max(np.abs(nxt - x)) <= tol
            x = nxt
            if done:
                break
        val = utility(np.clip(x, 0.0, 1.0), catalog, state, params)
        if val > best_val:
            best_x, best_val = np.clip(x, 0.0, 1.0), val
    return best_x
