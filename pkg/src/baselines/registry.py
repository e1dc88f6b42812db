# src/baselines/registry.py
from __future__ import annotations

from typing import Any, Dict

from .base import Baseline
from .gpu import GpuDramBaseline, GpuHybridBaseline, GpuSsdBaseline
from .ssd_like import AiFLikeBaseline, AiFMinusLikeBaseline, CambriconLikeBaseline

from src.core.llm_models import ModelSpec

BASELINE_REGISTRY = {
    "GpuDram": GpuDramBaseline,
    "GpuSsd": GpuSsdBaseline,
    "GpuHybrid": GpuHybridBaseline,
    "CambriconLike": CambriconLikeBaseline,
    "AiFLike": AiFLikeBaseline,
    "AiFMinusLike": AiFMinusLikeBaseline,
}


def get_baseline_class(name: str):
    if name not in BASELINE_REGISTRY:
        raise ValueError(f"Unknown baseline: {name}")
    return BASELINE_REGISTRY[name]


def baseline_throughput(kind: str, model: ModelSpec, params: Dict[str, Any] | None = None, ctx: int = 0) -> float:
    return get_baseline_class(kind)(params).throughput(model, ctx)


def calibrate_factor(
    kind: str,
    model: ModelSpec,
    target_tps: float,
    params: Dict[str, Any] | None = None,
    ctx: int = 0,
) -> float:
    """Efficiency factor that makes `kind` hit target_tps on `model` (memory-bound closed form)."""
    if target_tps <= 0:
        raise ValueError("target_tps must be > 0")
    cls = get_baseline_class(kind)
    unit: Baseline = cls({**(params or {}), "factor": 1.0})
    target_s = 1.0 / target_tps
    factor = unit.weight_seconds(unit.weight_bytes(model)) / target_s

    fitted = cls({**(params or {}), "factor": factor})
    if abs(fitted.token_seconds(model, ctx) - target_s) > 1e-9 * target_s:
        raise ValueError(f"{kind} cannot reach {target_tps} tok/s on {model.name}: compute bound")
    return factor
