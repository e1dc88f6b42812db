# src/baselines/base.py
from __future__ import annotations

from typing import Any, Dict, Tuple

from src.core.llm_models import ComponentBreakdown, ModelSpec
from src.core.workload import derive_breakdown
from src.storage.load_presets import load_preset_file

BASELINES_FILE = "baselines.json"
PJ = 1e-12


def baseline_params(kind: str) -> Dict[str, Any]:
    rows = load_preset_file(BASELINES_FILE)
    return {k: v for k, v in rows.get(kind, {}).items() if k != "note"}


class Baseline:
    """
    Analytic memory-bound model: a token costs the slower of streaming
    every linear-layer weight once and computing its ops.
    """
    kind = "base"

    def __init__(self, params: Dict[str, Any] | None = None):
        self.params: Dict[str, Any] = {**baseline_params(self.kind), **(params or {})}

    # -- resources ---------------------------------------------------------

    def raw_bandwidth(self) -> float:
        """Weight-streaming bandwidth before the efficiency factor, bytes/s."""
        raise NotImplementedError

    def compute_ops(self) -> float:
        raise NotImplementedError

    def bandwidth(self) -> float:
        return self.raw_bandwidth() * float(self.params.get("factor", 1.0))

    def weight_seconds(self, weight_bytes: float) -> float:
        return weight_bytes / self.bandwidth()

    # -- timing ------------------------------------------------------------

    @staticmethod
    def weight_bytes(model: ModelSpec, bd: ComponentBreakdown | None = None) -> int:
        bd = bd or derive_breakdown(model)
        return bd.linear_macs * model.bytes_per_weight

    def token_seconds(self, model: ModelSpec, ctx: int = 0) -> float:
        bd = derive_breakdown(model)
        mem = self.weight_seconds(self.weight_bytes(model, bd))
        compute = bd.total_ops(ctx + 1) / self.compute_ops()
        return max(mem, compute)

    def throughput(self, model: ModelSpec, ctx: int = 0) -> float:
        return 1.0 / self.token_seconds(model, ctx)

    def prefill_seconds(self, model: ModelSpec, tokens: int, ctx0: int = 0) -> float:
        """Weights stream once for the whole prompt."""
        bd = derive_breakdown(model)
        attended = tokens * ctx0 + tokens * (tokens + 1) // 2
        ops = tokens * (bd.linear_ops + bd.misc_ops) + bd.agg_ops_per_ctx * attended
        return max(self.weight_seconds(self.weight_bytes(model, bd)), ops / self.compute_ops())

    def latency(self, model: ModelSpec, prefill: int, decode: int) -> Tuple[float, float]:
        """(prefill seconds, decode seconds) for one request."""
        pre = self.prefill_seconds(model, prefill)
        dec = sum(self.token_seconds(model, prefill + i) for i in range(decode))
        return pre, dec

    # -- energy ------------------------------------------------------------

    def token_energy(self, model: ModelSpec, ctx: int = 0) -> Dict[str, float]:
        """Data-movement joules per decode token by path (nand, io, dram)."""
        raise NotImplementedError

    def token_data_movement(self, model: ModelSpec, ctx: int = 0) -> float:
        return sum(self.token_energy(model, ctx).values())
