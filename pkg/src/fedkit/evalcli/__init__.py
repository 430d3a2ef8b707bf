"""Experiment driver and CLI: the 8-model cross-silo evaluation."""

from .config import DEFAULT_CONFIG_TEXT, ExperimentConfig, default_config, load_config, parse_config
from .experiment import (
    CENTRALIZED,
    FEDERATED,
    ExperimentResult,
    SeedResult,
    cross_eval,
    merge_train_splits,
    run_experiment,
    run_seed,
    train_centralized,
    train_federated,
    train_locals,
)
from .report import (
    CrossEvalMatrix,
    read_curves_csv,
    read_matrix_csv,
    write_curves_csv,
    write_curves_svg,
    write_matrix_csv,
    write_matrix_svg,
)

__all__ = [
    "CENTRALIZED",
    "CrossEvalMatrix",
    "DEFAULT_CONFIG_TEXT",
    "ExperimentConfig",
    "ExperimentResult",
    "FEDERATED",
    "SeedResult",
    "cross_eval",
    "default_config",
    "load_config",
    "merge_train_splits",
    "parse_config",
    "read_curves_csv",
    "read_matrix_csv",
    "run_experiment",
    "run_seed",
    "train_centralized",
    "train_federated",
    "train_locals",
    "write_curves_csv",
    "write_curves_svg",
    "write_matrix_csv",
    "write_matrix_svg",
]
