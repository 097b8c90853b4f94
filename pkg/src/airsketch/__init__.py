"""Streaming sketch-based distributed tensor decomposition over simulated MIMO AirComp."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, dump_config
from .tensor import DenseTensor, unfold, refold, synth_unfolding, partition_columns
from .harness import run_experiment, compare_selection, emit_csv, cost_table

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config", "dump_config",
    "DenseTensor", "unfold", "refold", "synth_unfolding", "partition_columns",
    "run_experiment", "compare_selection", "emit_csv", "cost_table",
]
