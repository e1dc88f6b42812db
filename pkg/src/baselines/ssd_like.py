# src/baselines/ssd_like.py
from __future__ import annotations

from typing import Dict

from src.baselines.base import PJ, Baseline
from src.core.llm_models import ModelSpec
from src.core.workload import derive_breakdown


class SsdLikeBaseline(Baseline):
    """
    In-storage compute over conventional flash: every weight crosses the
    flash channel once per token; KV traffic stays in DRAM. `factor` is the
    one free contention/efficiency knob, fitted at 7B and then frozen.
    """
    kind = "SsdLike"

    def raw_bandwidth(self) -> float:
        p = self.params
        return float(p["planes"]) * float(p["page_bytes"]) / float(p["read_latency_s"])

    def compute_ops(self) -> float:
        return float(self.params["compute_ops"])

    def token_energy(self, model: ModelSpec, ctx: int = 0) -> Dict[str, float]:
        bd = derive_breakdown(model)
        moved = self.weight_bytes(model, bd)
        kv = bd.kv_bytes_per_ctx * (ctx + 1)
        p = self.params
        return {
            "nand": moved * float(p["pj_per_byte_nand"]) * PJ,
            "io": moved * float(p["pj_per_byte_channel"]) * PJ,
            "dram": kv * float(p["pj_per_byte_dram"]) * PJ,
        }


class CambriconLikeBaseline(SsdLikeBaseline):
    kind = "CambriconLike"


class AiFLikeBaseline(SsdLikeBaseline):
    kind = "AiFLike"


class AiFMinusLikeBaseline(SsdLikeBaseline):
    kind = "AiFMinusLike"
