"""Experiment harness: datasets, configs, evaluation, presets, CLI."""

from .config import ExperimentConfig, load_config, parse_config_text
from .data import DataSplit, DatasetSpec, SplitSpec, load_dataset, make_split
from .evaluation import EvalConfig, MetricsRecord, evaluate
from .metrics import FIELD_ORDER, read_metrics, write_metrics
from .presets import PRESETS, run_point, run_preset

__all__ = [
    "ExperimentConfig", "load_config", "parse_config_text",
    "DataSplit", "DatasetSpec", "SplitSpec", "load_dataset", "make_split",
    "EvalConfig", "MetricsRecord", "evaluate",
    "FIELD_ORDER", "read_metrics", "write_metrics",
    "PRESETS", "run_point", "run_preset",
]
