# src/core/roofline.py
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Iterable, List

import pandas as pd

from src.core.errors import ConfigError
from src.core.hw_models import HwConfig, hardware_preset, peak_throughput
from src.core.llm_models import ModelSpec
from src.core.workload import derive_breakdown
from src.engine.nand_fabric import aggregate_bandwidth
from src.storage.load_presets import load_preset_file

log = logging.getLogger(__name__)


class Bound(str, Enum):
    MEMORY = "MemoryBound"
    COMPUTE = "ComputeBound"


@dataclass(frozen=True)
class Platform:
    name: str
    peak_ops: float
    bandwidth_bps: float

    @property
    def ridge(self) -> float:
        return self.peak_ops / self.bandwidth_bps


@dataclass(frozen=True)
class RooflinePoint:
    arithmetic_intensity: float
    bound: Bound
    attainable_ops: float
    peak_ops: float
    bandwidth_bps: float

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["bound"] = self.bound.value
        return d


def platform_for(hw: HwConfig) -> Platform:
    """NAND array and DRAM feed the two compute sides concurrently."""
    return Platform(hw.name, peak_throughput(hw), aggregate_bandwidth(hw.nand) + hw.dram.bandwidth_bps)


def load_platforms() -> Dict[str, Platform]:
    rows = load_preset_file("hardware.json").get("platforms", {})
    return {name: Platform(name, float(r["peak_ops"]), float(r["bandwidth_bps"])) for name, r in rows.items()}


def resolve_platform(name: str) -> Platform:
    platforms = load_platforms()
    if name in platforms:
        return platforms[name]
    try:
        return platform_for(hardware_preset(name))
    except ConfigError:
        raise ConfigError(
            "roofline.platform",
            f"Unknown platform: {name}. Available: {', '.join(list(platforms) + ['NVLLM', 'NVLLM-12C', 'NVLLM-16C'])}",
        ) from None


def workload_point(model: ModelSpec, ctx: int, tokens: int = 1) -> tuple[float, float]:
    """(ops, bytes moved) for `tokens` new tokens over `ctx` cached ones; weights are read once."""
    bd = derive_breakdown(model)
    attended = tokens * ctx + tokens * (tokens + 1) // 2
    ops = tokens * (bd.linear_ops + bd.misc_ops) + bd.agg_ops_per_ctx * attended
    moved = bd.linear_macs * model.bytes_per_weight + bd.kv_bytes_per_ctx * (ctx + tokens)
    return float(ops), float(moved)


def roofline_point(model: ModelSpec, ctx: int, hw: HwConfig | Platform, tokens: int = 1) -> RooflinePoint:
    platform = hw if isinstance(hw, Platform) else platform_for(hw)
    ops, moved = workload_point(model, ctx, tokens)
    intensity = ops / moved if moved else float("inf")
    attainable = min(platform.peak_ops, intensity * platform.bandwidth_bps)
    bound = Bound.MEMORY if intensity < platform.ridge else Bound.COMPUTE
    return RooflinePoint(intensity, bound, attainable, platform.peak_ops, platform.bandwidth_bps)


def roofline_sweep(
    models: Iterable[ModelSpec],
    platforms: Iterable[Platform],
    contexts: Iterable[int],
    tokens: int = 1,
) -> pd.DataFrame:
    rows: List[Dict[str, object]] = []
    contexts = list(contexts)
    platforms = list(platforms)
    for model in models:
        for platform in platforms:
            for ctx in contexts:
                p = roofline_point(model, ctx, platform, tokens)
                rows.append({"model": model.name, "platform": platform.name, "ctx": ctx, "tokens": tokens, **p.to_dict()})
    columns = ["model", "platform", "ctx", "tokens", "arithmetic_intensity", "bound",
               "attainable_ops", "peak_ops", "bandwidth_bps"]
    return pd.DataFrame(rows, columns=columns)
