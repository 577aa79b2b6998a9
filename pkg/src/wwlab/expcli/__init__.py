"""Experiment configuration, scenario runners and report emission."""

from .config import ExperimentConfig, load_config, parse_config
from .experiments import (
    run,
    run_dn_study,
    run_flowmap_continuity,
    run_mollifier_study,
    run_simulate,
)
from .report import emit_report
from .result import ExperimentResult

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "emit_report",
    "load_config",
    "parse_config",
    "run",
    "run_dn_study",
    "run_flowmap_continuity",
    "run_mollifier_study",
    "run_simulate",
]
