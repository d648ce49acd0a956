"""Configuration, data plumbing and experiment drivers."""

from .config import ExperimentConfig, PartitionSpec, load_config
from .data import equi_depth_partition, ingest_csv, synthetic_dataset
from .experiments import run_ldp_experiment, run_leakage_report, run_range_experiment

__all__ = [
    "ExperimentConfig", "PartitionSpec", "load_config", "equi_depth_partition", "ingest_csv",
    "synthetic_dataset", "run_ldp_experiment", "run_leakage_report", "run_range_experiment",
]
