from .base import Baseline, baseline_params
from .registry import BASELINE_REGISTRY, baseline_throughput, calibrate_factor, get_baseline_class

__all__ = [
    "Baseline",
    "baseline_params",
    "BASELINE_REGISTRY",
    "baseline_throughput",
    "calibrate_factor",
    "get_baseline_class",
]
