"""Experiment configuration: TOML in, validated dataclasses out."""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from crowdcache.catalog import ContentCatalog
from crowdcache.dynamics import EvolutionConfig
from crowdcache.meanfield import MobilityModel
from crowdcache.user_model import UserParams, UserType

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SWEEP_PARAMETERS = ("beta", "rho", "psi", "alpha")
_PARAM_FIELDS = tuple(UserParams.__dataclass_fields__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    parameter: str = "beta"
    start: float = 0.0
    stop: float = 2.0
    step: float = 0.1

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if not self.step > 0:
            raise ConfigError("sweep step must be positive")
        if self.stop < self.start:
            raise ConfigError("sweep range is empty (stop < start)")

    def values(self):
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]


@dataclass(frozen=True)
class OracleSettings:
    trials: int = 100
    seed: int = 0
    mode: str = "counts"
    finite_u_allowance: float = 1.0

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError("oracle trials must be >= 1")
        if self.mode not in ("counts", "graph"):
            raise ConfigError("oracle mode must be 'counts' or 'graph'")
        if self.finite_u_allowance < 0:
            raise ConfigError("finite_u_allowance must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    catalog: ContentCatalog
    mobility: MobilityModel
    population: tuple
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    output_directory: str = "results"

    def __post_init__(self):
        total = sum(t.count for t in self.population)
        if total != self.mobility.population:
            raise ConfigError(
                f"user type counts sum to {total}, mobility population is {self.mobility.population}")

    def with_value(self, parameter, value):
        """Copy of this configuration with one swept parameter overridden."""
        if parameter == "beta":
            cat = self.catalog
            return replace(self, catalog=ContentCatalog(
                cat.sizes, skew=float(value), stationary_factor=cat.stationary_factor,
                rankings=cat.rankings))
        if parameter == "rho":
            return replace(self, mobility=MobilityModel(self.mobility.population, float(value)))
        if parameter == "psi":
            return replace(self, mobility=MobilityModel.from_mean_neighbors(
                self.mobility.population, float(value)))
        if parameter == "alpha":
            pop = tuple(UserType(replace(t.params, cache_cost_coefficient=float(value)),
                                 t.count, t.name) for t in self.population)
            return replace(self, population=pop)
        raise ConfigError(f"unknown sweep parameter {parameter!r}")


def _catalog(raw):
    raw = dict(raw)
    if "sizes" in raw:
        sizes = np.asarray(raw.pop("sizes"), dtype=float)
        if "file_count" in raw and int(raw["file_count"]) != sizes.size:
            raise ConfigError("catalog.file_count disagrees with len(catalog.sizes)")
    else:
        sizes = np.full(int(raw.get("file_count", 10)), float(raw.get("size", 1.0)))
    return ContentCatalog(sizes, skew=float(raw.get("skew", 0.0)),
                          stationary_factor=float(raw.get("stationary_factor", 0.0)),
                          rankings=raw.get("rankings"))


def _mobility(raw):
    U = int(raw.get("population", 1000))
    if "encounter_probability" in raw and "mean_neighbors" in raw:
        raise ConfigError("give either mobility.encounter_probability or mobility.mean_neighbors")
    if "mean_neighbors" in raw:
        return MobilityModel.from_mean_neighbors(U, float(raw["mean_neighbors"]))
    return MobilityModel(U, float(raw.get("encounter_probability", 0.0)))


def _user_types(raw_list, population):
    if not raw_list:
        return (UserType(UserParams(cache_cost_coefficient=0.1), population),)
    out = []
    for i, raw in enumerate(raw_list):
        raw = dict(raw)
        name = str(raw.pop("name", f"type{i}"))
        count = int(raw.pop("count", population if len(raw_list) == 1 else 0))
        unknown = set(raw) - set(_PARAM_FIELDS)
        if unknown:
            raise ConfigError(f"unknown user type keys: {sorted(unknown)}")
        out.append(UserType(UserParams(**{k: float(v) for k, v in raw.items()}), count, name))
    return tuple(out)


def config_from_dict(data):
    data = copy.deepcopy(data)
    try:
        mobility = _mobility(data.get("mobility", {}))
        ev = data.get("evolution", {})
        return ExperimentConfig(
            catalog=_catalog(data.get("catalog", {})),
            mobility=mobility,
            population=_user_types(data.get("user_types", []), mobility.population),
            evolution=EvolutionConfig(
                damping=float(ev.get("damping", 0.98)),
                tolerance=float(ev.get("tolerance", 1e-6)),
                max_iterations=int(ev.get("max_iterations", 10000)),
                norm=str(ev.get("norm", "max")),
                gap_every=int(ev.get("gap_every", 0))),
            sweep=SweepSpec(**data.get("sweep", {})),
            oracle=OracleSettings(**data.get("oracle", {})),
            output_directory=str(data.get("output", {}).get("directory", "results")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def default_config_text():
    return resources.files("crowdcache.experiments").joinpath("default.toml").read_text()


def default_config():
    return config_from_dict(tomllib.loads(default_config_text()))


def load_config(path=None):
    if path is None:
        return default_config()
    with open(Path(path), "rb") as fh:
        return config_from_dict(tomllib.load(fh))
