"""Mean-field interacting particle simulation and chaos-decay toolkit."""

from .backend import active_backend
from .model import (
    ConfigError,
    Confinement,
    DriftSpec,
    ExperimentConfig,
    InitialCondition,
    OUParams,
    Pairwise,
    PowerSeries,
    SeriesCoefficients,
    instantiate_drift,
    ou_drift,
    parse_experiment_config,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Confinement",
    "DriftSpec",
    "ExperimentConfig",
    "InitialCondition",
    "OUParams",
    "Pairwise",
    "PowerSeries",
    "SeriesCoefficients",
    "active_backend",
    "instantiate_drift",
    "ou_drift",
    "parse_experiment_config",
    "validate_config",
    "__version__",
]
