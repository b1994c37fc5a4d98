"""Experiment configuration, sweeps and the command-line interface."""

from .bridge import LaserPoint, config_point, laser_point
from .config import ExperimentConfig, config_from_mapping, default_config, itu_channel_nm, load_config
from .sweeps import (
    SweepRow, SweepTable, emit_csv, evaluate_link, load_csv, optimize_injection,
    run_attenuation_sweep, run_injection_sweep, run_wavelength_sweep,
)

__all__ = [
    "ExperimentConfig", "LaserPoint", "SweepRow", "SweepTable", "config_from_mapping", "config_point",
    "default_config", "emit_csv", "evaluate_link", "itu_channel_nm", "laser_point", "load_config",
    "load_csv", "optimize_injection", "run_attenuation_sweep", "run_injection_sweep", "run_wavelength_sweep",
]
