"""Sweeps, baseline comparison, reduction reports and oracle cross-checks."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from crowdcache.baselines import energy_violation, mpc_strategy, ruc_strategy
from crowdcache.dynamics import equilibrium_gap, evolve, gamma_scan
from crowdcache.meanfield import build_state
from crowdcache.oracle import simulate
from crowdcache.user_model import loads

logger = logging.getLogger(__name__)

SCHEMES = ("equilibrium", "MPC", "RUC")
METRICS = ("total_transmission_cost", "cellular_load")


@dataclass
class MetricsRow:
    value: float
    scheme: str
    total_transmission_cost: float
    cellular_load: float
    eta: np.ndarray
    equilibrium_gap: float
    iterations: int
    converged: bool | None
    energy_violation: float = 0.0


@dataclass
class ReductionRow:
    value: float
    metric: str
    baseline: str
    baseline_value: float
    equilibrium_value: float
    reduction: float | None   # None when the baseline metric is zero


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def scheme_metrics(profile, config, scheme, value, iterations=0, converged=None):
    """Population-average transmission cost and cellular load of a profile."""
    X = np.atleast_2d(profile)
    counts = np.array([t.count for t in config.population], dtype=float)
    state = build_state(X, config.mobility, config.catalog, counts)
    cost = cell = viol = 0.0
    for row, t, n in zip(X, config.population, counts):
        ld = loads(row, config.catalog, state)
        cost += n * ld.transmission_cost(t.params)
        cell += n * ld.cellular
        viol = max(viol, energy_violation(row, config.catalog, state, t.params))
    U = counts.sum()
    gap = equilibrium_gap(X, config.catalog, config.mobility, config.population)
    return MetricsRow(value, scheme, cost / U, cell / U, state.cache_fraction.copy(), gap,
                      iterations, converged, viol)


def baseline_profile(config, policy):
    fn = {"MPC": mpc_strategy, "RUC": ruc_strategy}[policy]
    return np.stack([fn(config.catalog, t.params) for t in config.population])


def cost_resolution(config):
    """How far a converged iterate's cost can sit from the exact fixed point's.

    A converged iterate is within ``tol / (1 - gamma)`` (max-norm) of its best
    response; transmission cost moves at most ``sum_f q_f s_f w_B (1 + psi)``
    per unit max-norm change of the profile.
    """
    ev = config.evolution
    wb = max(t.params.cellular_unit_cost for t in config.population)
    lip = config.catalog.demand * wb * (1.0 + config.mobility.mean_neighbors)
    return lip * ev.tolerance / (1.0 - ev.damping)


def evaluate_point(config, value=float("nan")):
    """Equilibrium plus both baselines at one configuration."""
    res = evolve(config.population, config.catalog, config.mobility, config.evolution)
    if not res.converged:
        logger.warning("equilibrium did not converge at value %s", value)
    rows = [scheme_metrics(res.profile, config, "equilibrium", value, res.iterations, res.converged)]
    for policy in ("MPC", "RUC"):
        rows.append(scheme_metrics(baseline_profile(config, policy), config, policy, value))
    return res, rows


def _sweep_point(args):
    config, parameter, value = args
    _, rows = evaluate_point(config.with_value(parameter, value), value)
    return rows


def run_sweep(config, out_dir=None, workers=1, parameter=None):
    """Evaluate every sweep value; optionally write metrics and reduction CSVs."""
    parameter = parameter or config.sweep.parameter
    values = config.sweep.values()
    jobs = [(config, parameter, v) for v in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            chunks = list(pool.map(_sweep_point, jobs))
    else:
        chunks = [_sweep_point(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(rows, out / f"metrics_{parameter}.csv", config.catalog.file_count)
        red, extrema = reduction_report(rows)
        write_reduction_csv(red, out / f"reductions_{parameter}.csv")
        (out / f"reduction_summary_{parameter}.json").write_text(
            json.dumps(extrema, indent=2, sort_keys=True) + "\n")
    return rows


def metrics_header(file_count):
    return (["value", "scheme", "total_transmission_cost", "cellular_load"]
            + [f"eta_{i + 1}" for i in range(file_count)]
            + ["equilibrium_gap", "iterations", "converged", "energy_violation"])


def write_metrics_csv(rows, path, file_count):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(file_count))
        for r in rows:
            w.writerow([_fmt(r.value), r.scheme, _fmt(r.total_transmission_cost),
                        _fmt(r.cellular_load)] + [_fmt(e) for e in r.eta]
                       + [_fmt(r.equilibrium_gap), _fmt(r.iterations), _fmt(r.converged),
                          _fmt(r.energy_violation)])


def reduction_report(rows):
    """Relative reduction of the equilibrium against each baseline, per point.

    Returns ``(reductions, extrema)`` where ``extrema`` maps
    ``"<metric>/<baseline>"`` to the largest and smallest reduction over the
    sweep together with the sweep values where they occur.
    """
    by_value = {}
    for r in rows:
        by_value.setdefault(r.value, {})[r.scheme] = r
    out = []
    for value, schemes in by_value.items():
        missing = set(SCHEMES) - set(schemes)
        if missing:
            raise ValueError(f"sweep value {value} lacks schemes {sorted(missing)}")
        eq = schemes["equilibrium"]
        for metric in METRICS:
            for base in ("MPC", "RUC"):
                b = getattr(schemes[base], metric)
                e = getattr(eq, metric)
                red = None if b == 0 else (b - e) / b
                out.append(ReductionRow(value, metric, base, b, e, red))
    extrema = {}
    for metric in METRICS:
        for base in ("MPC", "RUC"):
            sel = [r for r in out if r.metric == metric and r.baseline == base
                   and r.reduction is not None]
            key = f"{metric}/{base}"
            if not sel:
                extrema[key] = None
                continue
            hi = max(sel, key=lambda r: r.reduction)
            lo = min(sel, key=lambda r: r.reduction)
            extrema[key] = {"max": hi.reduction, "max_at": hi.value,
                            "min": lo.reduction, "min_at": lo.value}
    return out, extrema


def write_reduction_csv(reductions, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "metric", "baseline", "baseline_value", "equilibrium_value",
                    "reduction"])
        for r in reductions:
            w.writerow([_fmt(r.value), r.metric, r.baseline, _fmt(r.baseline_value),
                        _fmt(r.equilibrium_value),
                        "n/a" if r.reduction is None else _fmt(r.reduction)])


def write_trajectory_csv(result, population, path):
    F = result.profile.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "step_norm"] + [f"eta_{i + 1}" for i in range(F)]
                   + [f"utility_{t.name}" for t in population] + ["equilibrium_gap"])
        for rec in result.trajectory:
            w.writerow([rec.iteration, _fmt(rec.step_norm)] + [_fmt(e) for e in rec.eta]
                       + [_fmt(u) for u in rec.utilities] + [_fmt(rec.equilibrium_gap)])


@dataclass
class ValidationReport:
    rows: list
    loads: dict
    passed: bool
    offending: list
    outcome: object


def validation_band(se, mean_neighbors, population, allowance):
    """Tolerance for closed form vs Monte Carlo: ``max(0.01, 4 SE)`` plus finite-U slack."""
    se = np.nan_to_num(np.asarray(se, dtype=float), nan=0.0)
    return np.maximum(0.01, 4.0 * se) + allowance * (1.0 + mean_neighbors) / population


def validate_oracle(config, profile=None, out_dir=None, workers=1):
    """Compare mean-field ``P_f`` and ``N_f`` with the Monte Carlo oracle.

    Uses the equilibrium profile of ``config`` unless ``profile`` (per-type
    rows) is given.
    """
    counts = np.array([t.count for t in config.population])
    if profile is None:
        profile = evolve(config.population, config.catalog, config.mobility,
                         config.evolution).profile
    profile = np.atleast_2d(profile)
    state = build_state(profile, config.mobility, config.catalog, counts)
    cap = np.repeat([t.params.storage_capacity for t in config.population], counts)
    o = config.oracle
    outcome = simulate(profile, config.catalog, config.mobility, o.trials, seed=o.seed,
                       counts=counts, mode=o.mode, capacity=cap, workers=workers)
    psi, U = config.mobility.mean_neighbors, config.mobility.population
    bandP = validation_band(outcome.hit_se, psi, U, o.finite_u_allowance)
    bandN = validation_band(outcome.requesters_se, psi, U, o.finite_u_allowance)
    rows, offending = [], []
    for f in range(config.catalog.file_count):
        row = {
            "file_id": f + 1,
            "eta": state.cache_fraction[f],
            "P_closed": state.hit_probability[f],
            "P_hat": outcome.empirical_hit[f],
            "P_se": outcome.hit_se[f],
            "N_closed": state.expected_requesters[f],
            "N_hat": outcome.empirical_requesters[f],
            "N_se": outcome.requesters_se[f],
            "trials": outcome.trial_count,
            "seed": outcome.seed,
        }
        rows.append(row)
        # files nobody could request non-locally (or nobody caches) carry no evidence
        bad_p = np.isfinite(row["P_hat"]) and abs(row["P_hat"] - row["P_closed"]) > bandP[f]
        bad_n = np.isfinite(row["N_hat"]) and abs(row["N_hat"] - row["N_closed"]) > bandN[f]
        if bad_p or bad_n:
            offending.append(row)
    closed_loads = {"local": 0.0, "d2d_in": 0.0, "cellular": 0.0, "d2d_out": 0.0}
    for r, n in zip(profile, counts):
        ld = loads(r, config.catalog, state)
        for k in closed_loads:
            closed_loads[k] += n * getattr(ld, k) / counts.sum()
    load_cmp = {k: (closed_loads[k], outcome.empirical_loads[k]) for k in closed_loads}
    report = ValidationReport(rows, load_cmp, not offending, offending, outcome)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = ["file_id", "eta", "P_closed", "P_hat", "P_se", "N_closed", "N_hat", "N_se",
                "trials", "seed"]
        with open(out / "oracle_validation.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in cols])
        with open(out / "oracle_loads.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["load", "closed", "empirical"])
            for k, (c, e) in load_cmp.items():
                w.writerow([k, _fmt(c), _fmt(e)])
    return report


def run_gamma_scan(config, gammas, out_dir=None):
    results = gamma_scan(config.population, config.catalog, config.mobility, gammas,
                         config.evolution)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "gamma_scan.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "converged", "iterations", "final_step_norm", "equilibrium_gap"])
            for g, r in results:
                w.writerow([_fmt(g), _fmt(r.converged), r.iterations, _fmt(r.final_step_norm),
                            _fmt(r.equilibrium_gap)])
    return results
