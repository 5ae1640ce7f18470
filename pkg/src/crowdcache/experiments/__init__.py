from crowdcache.experiments.config import (
    ConfigError,
    ExperimentConfig,
    OracleSettings,
    SweepSpec,
    default_config,
    load_config,
)
from crowdcache.experiments.runner import (
    MetricsRow,
    evaluate_point,
    reduction_report,
    run_gamma_scan,
    run_sweep,
    validate_oracle,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "OracleSettings",
    "SweepSpec",
    "default_config",
    "load_config",
    "MetricsRow",
    "evaluate_point",
    "reduction_report",
    "run_gamma_scan",
    "run_sweep",
    "validate_oracle",
]
