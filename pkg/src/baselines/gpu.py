# src/baselines/gpu.py
from __future__ import annotations

from typing import Dict

from src.baselines.base import PJ, Baseline
from src.core.llm_models import ModelSpec


class GpuDramBaseline(Baseline):
    """Weights stream from host DRAM over the host link every token."""
    kind = "GpuDram"

    def raw_bandwidth(self) -> float:
        return float(self.params["link_bps"])

    def compute_ops(self) -> float:
        return float(self.params["gpu_peak_ops"]) * float(self.params["gpu_efficiency"])

    def token_energy(self, model: ModelSpec, ctx: int = 0) -> Dict[str, float]:
        moved = self.weight_bytes(model)
        return {
            "nand": 0.0,
            "io": moved * float(self.params["pj_per_byte_link"]) * PJ,
            "dram": moved * float(self.params["pj_per_byte_source"]) * PJ,
        }


class GpuSsdBaseline(GpuDramBaseline):
    """Weights stream from an SSD; the link caps throughput."""
    kind = "GpuSsd"

    def token_energy(self, model: ModelSpec, ctx: int = 0) -> Dict[str, float]:
        moved = self.weight_bytes(model)
        return {
            "nand": moved * float(self.params["pj_per_byte_source"]) * PJ,
            "io": moved * float(self.params["pj_per_byte_link"]) * PJ,
            "dram": 0.0,
        }


class GpuHybridBaseline(GpuDramBaseline):
    """dram_fraction of the weights from host DRAM, the rest from SSD, one after the other."""
    kind = "GpuHybrid"

    def _split(self, weight_bytes: float) -> tuple[float, float]:
        f = float(self.params["dram_fraction"])
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"dram_fraction must be in [0, 1] (got {f})")
        return f * weight_bytes, (1.0 - f) * weight_bytes

    def weight_seconds(self, weight_bytes: float) -> float:
        from_dram, from_ssd = self._split(weight_bytes)
        factor = float(self.params.get("factor", 1.0))
        return (from_dram / float(self.params["dram_link_bps"]) + from_ssd / float(self.params["link_bps"])) / factor

    def token_energy(self, model: ModelSpec, ctx: int = 0) -> Dict[str, float]:
        moved = self.weight_bytes(model)
        from_dram, from_ssd = self._split(moved)
        return {
            "nand": from_ssd * float(self.params["pj_per_byte_source"]) * PJ,
            "io": moved * float(self.params["pj_per_byte_link"]) * PJ,
            "dram": from_dram * float(self.params["pj_per_byte_dram"]) * PJ,
        }
