"""Configuration-driven experiment harness."""

from .config import DEFAULTS, ConfigError, ExperimentConfig, format_config, load_config, parse_config
from .experiments import (
    CSV_HEADER,
    ModelMissingError,
    Row,
    SweepResult,
    TrainOutcome,
    format_csv,
    read_csv,
    run_mae_vs_power,
    run_mae_vs_slots,
    run_runtime_table,
    run_scrlb_curve,
    run_train,
    write_csv,
)
