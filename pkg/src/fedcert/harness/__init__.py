from .config import ExperimentConfig, load_config, parse_config
from .data import Dataset, gen_synthetic, load_idx
from .experiment import run_experiment
from .metrics import CurveTable, acr, certified_accuracy_curve

__all__ = [
    "CurveTable", "Dataset", "ExperimentConfig", "acr", "certified_accuracy_curve",
    "gen_synthetic", "load_config", "load_idx", "parse_config", "run_experiment",
]
