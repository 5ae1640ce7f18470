"""Command-line experiment runner.

Exit codes: 0 success, 2 oracle validation band failure, 3 an equilibrium
that was asked for did not converge, 1 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from crowdcache.experiments.config import ConfigError, SweepSpec, load_config
from crowdcache.experiments.runner import (
    evaluate_point,
    reduction_report,
    run_gamma_scan,
    run_sweep,
    validate_oracle,
    write_metrics_csv,
    write_trajectory_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BAND = 2
EXIT_NONCONVERGED = 3

DEFAULT_GAMMAS = (0.5, 0.8, 0.9, 0.98)

log = logging.getLogger("crowdcache")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="TOML configuration (shipped default if omitted)")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="oracle seed")
    p.add_argument("--trials", type=int, help="oracle trials")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--quiet", action="store_true", help="only print errors")


def build_parser():
    parser = argparse.ArgumentParser(prog="crowdcache", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="single configuration: equilibrium and metrics")
    _common(p)
    p.add_argument("--gamma-sweep", action="store_true",
                   help="on non-convergence retry with each damping in --gammas")
    p.add_argument("--gammas", type=float, nargs="+", default=list(DEFAULT_GAMMAS))

    p = sub.add_parser("sweep", help="parameter sweep with baseline comparison")
    _common(p)
    p.add_argument("--param", choices=("beta", "rho", "psi", "alpha"))
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float)

    p = sub.add_parser("validate", help="Monte Carlo check of the mean-field formulas")
    _common(p)
    p.add_argument("--mode", choices=("counts", "graph"))

    p = sub.add_parser("gamma-scan", help="convergence study over the damping factor")
    _common(p)
    p.add_argument("--gammas", type=float, nargs="+", default=list(DEFAULT_GAMMAS))
    return parser


def _load(args):
    cfg = load_config(args.config)
    oracle = cfg.oracle
    if args.seed is not None:
        oracle = replace(oracle, seed=args.seed)
    if args.trials is not None:
        oracle = replace(oracle, trials=args.trials)
    if getattr(args, "mode", None):
        oracle = replace(oracle, mode=args.mode)
    cfg = replace(cfg, oracle=oracle)
    if getattr(args, "param", None) or getattr(args, "start", None) is not None \
            or getattr(args, "stop", None) is not None or getattr(args, "step", None) is not None:
        sw = cfg.sweep
        cfg = replace(cfg, sweep=SweepSpec(
            parameter=args.param or sw.parameter,
            start=sw.start if args.start is None else args.start,
            stop=sw.stop if args.stop is None else args.stop,
            step=sw.step if args.step is None else args.step))
    out = Path(args.out or cfg.output_directory)
    return cfg, out


def _cmd_equilibrium(cfg, out, args):
    res, rows = evaluate_point(cfg)
    if not res.converged and args.gamma_sweep:
        for g in args.gammas:
            trial = replace(cfg, evolution=replace(cfg.evolution, damping=g))
            res, rows = evaluate_point(trial)
            if res.converged:
                log.info("converged with damping %g", g)
                cfg = trial
                break
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(res, cfg.population, out / "trajectory.csv")
    write_metrics_csv(rows, out / "equilibrium_metrics.csv", cfg.catalog.file_count)
    summary = {
        "converged": res.converged,
        "iterations": res.iterations,
        "damping": res.damping,
        "final_step_norm": res.final_step_norm,
        "equilibrium_gap": res.equilibrium_gap,
        "certified": res.certified,
        "eta": [float(e) for e in res.eta],
        "metrics": {r.scheme: {"total_transmission_cost": r.total_transmission_cost,
                               "cellular_load": r.cellular_load,
                               "equilibrium_gap": r.equilibrium_gap} for r in rows},
    }
    (out / "equilibrium.json").write_text(json.dumps(summary, indent=2) + "\n")
    log.info("converged=%s iterations=%d gap=%.3g", res.converged, res.iterations,
             res.equilibrium_gap)
    for r in rows:
        log.info("%-12s cost=%.6f cellular=%.6f", r.scheme, r.total_transmission_cost,
                 r.cellular_load)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _cmd_sweep(cfg, out, args):
    rows = run_sweep(cfg, out_dir=out, workers=args.workers)
    _, extrema = reduction_report(rows)
    for key, ext in extrema.items():
        if ext:
            log.info("%-32s max %6.1f%% at %g, min %6.1f%% at %g", key, 100 * ext["max"],
                     ext["max_at"], 100 * ext["min"], ext["min_at"])
    bad = sorted({r.value for r in rows if r.scheme == "equilibrium" and not r.converged})
    if bad:
        log.error("no convergence at %s = %s", cfg.sweep.parameter, bad)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_validate(cfg, out, args):
    report = validate_oracle(cfg, out_dir=out, workers=args.workers)
    for row in report.rows:
        log.info("file %2d  P %.4f vs %.4f  N %.4f vs %.4f", row["file_id"], row["P_closed"],
                 row["P_hat"], row["N_closed"], row["N_hat"])
    if not report.passed:
        for row in report.offending:
            log.error("band violation: %s", row)
        return EXIT_BAND
    return EXIT_OK


def _cmd_gamma_scan(cfg, out, args):
    results = run_gamma_scan(cfg, args.gammas, out_dir=out)
    for g, r in results:
        log.info("gamma=%g converged=%s iterations=%d gap=%.3g", g, r.converged, r.iterations,
                 r.equilibrium_gap)
    return EXIT_OK if any(r.converged for _, r in results) else EXIT_NONCONVERGED


COMMANDS = {
    "equilibrium": _cmd_equilibrium,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "gamma-scan": _cmd_gamma_scan,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg, out = _load(args)
    except (ConfigError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, out, args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
