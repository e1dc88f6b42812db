# src/core/llm_models.py
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Tuple

from src.core.errors import ConfigError

PRECISION_BYTES = {"INT8": 1, "BF16": 2}
FFN_KINDS = ("standard", "gated")
NORM_KINDS = ("layernorm", "rmsnorm")


# =========================
# Model shape
# =========================

@dataclass(frozen=True)
class ModelSpec:
    """
    Transformer decoder shape descriptor. Weights never exist; only
    their shapes, which drive byte footprints and per-token work.
    """
    name: str
    num_layers: int
    d_model: int
    d_ffn: int
    num_heads: int
    head_dim: int
    vocab_size: int
    weight_precision: str = "INT8"
    num_kv_heads: int | None = None     # grouped-query attention; None = num_heads
    ffn_kind: str = "standard"          # "standard" (up/down) | "gated" (gate/up/down)
    norm_kind: str = "layernorm"        # layernorm has gain+bias, rmsnorm gain only
    max_positions: int = 0              # learned positional table rows, 0 for rotary
    tied_embeddings: bool = True        # LM head shares the token embedding table
    kv_precision: str = "BF16"

    def __post_init__(self) -> None:
        for attr in ("num_layers", "d_model", "num_heads", "head_dim", "vocab_size"):
            if getattr(self, attr) <= 0:
                raise ConfigError(f"model.{attr}", f"must be > 0 (got {getattr(self, attr)})")
        if self.d_ffn < 0:
            raise ConfigError("model.d_ffn", f"must be >= 0 (got {self.d_ffn})")
        if self.d_model != self.num_heads * self.head_dim:
            raise ConfigError(
                "model.d_model",
                f"{self.d_model} != num_heads x head_dim ({self.num_heads} x {self.head_dim})",
            )
        if self.num_kv_heads is not None and (
            self.num_kv_heads <= 0 or self.num_heads % self.num_kv_heads
        ):
            raise ConfigError("model.num_kv_heads", "must divide num_heads")
        if self.max_positions < 0:
            raise ConfigError("model.max_positions", "must be >= 0")
        if self.weight_precision not in PRECISION_BYTES:
            raise ConfigError("model.weight_precision", f"unknown precision {self.weight_precision!r}")
        if self.kv_precision not in PRECISION_BYTES:
            raise ConfigError("model.kv_precision", f"unknown precision {self.kv_precision!r}")
        if self.ffn_kind not in FFN_KINDS:
            raise ConfigError("model.ffn_kind", f"expected one of {FFN_KINDS}")
        if self.norm_kind not in NORM_KINDS:
            raise ConfigError("model.norm_kind", f"expected one of {NORM_KINDS}")

    @property
    def bytes_per_weight(self) -> int:
        return PRECISION_BYTES[self.weight_precision]

    @property
    def kv_heads(self) -> int:
        return self.num_kv_heads or self.num_heads

    @property
    def q_dim(self) -> int:
        return self.num_heads * self.head_dim

    @property
    def kv_dim(self) -> int:
        return self.kv_heads * self.head_dim

    @property
    def ffn_matrices(self) -> int:
        if self.d_ffn == 0:
            return 0
        return 3 if self.ffn_kind == "gated" else 2

    @property
    def qkvo_columns(self) -> int:
        """Output columns across Q, K, V and O; each holds d_model weights."""
        return self.q_dim + 2 * self.kv_dim + self.d_model

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"model.{unknown[0]}", "unknown model field")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError("model", str(e)) from e


# =========================
# Derived footprints
# =========================

@dataclass(frozen=True)
class ComponentBreakdown:
    """
    Byte footprints and per-token ops. One MAC = 2 ops.
    attention_agg_ops(ctx) covers score + aggregate over ctx cached tokens.
    """
    attention_proj_bytes: int
    ffn_bytes: int
    embedding_bytes: int
    lm_head_bytes: int
    norm_bytes: int
    attention_proj_ops: int
    ffn_ops: int
    lm_head_ops: int
    misc_ops: int
    agg_ops_per_ctx: int
    kv_bytes_per_ctx: int               # K + V bytes per cached token, all layers

    def attention_agg_ops(self, ctx: int) -> int:
        return self.agg_ops_per_ctx * max(0, ctx)

    @property
    def total_bytes(self) -> int:
        return (
            self.attention_proj_bytes
            + self.ffn_bytes
            + self.embedding_bytes
            + self.lm_head_bytes
            + self.norm_bytes
        )

    @property
    def linear_ops(self) -> int:
        return self.attention_proj_ops + self.ffn_ops + self.lm_head_ops

    @property
    def linear_macs(self) -> int:
        return self.linear_ops // 2

    def total_ops(self, ctx: int = 0) -> int:
        return self.linear_ops + self.misc_ops + self.attention_agg_ops(ctx)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# =========================
# Traces
# =========================

@dataclass(frozen=True)
class WorkloadTrace:
    turns: Tuple[Tuple[int, int], ...] = field(default_factory=lambda: ((16, 16),))
    initial_kv_len: int = 0

    def __post_init__(self) -> None:
        turns = tuple((int(p), int(d)) for p, d in self.turns)
        object.__setattr__(self, "turns", turns)
        if self.initial_kv_len < 0:
            raise ConfigError("trace.initial_kv_len", "must be >= 0")
        for i, (prefill, decode) in enumerate(turns):
            if prefill < 1 or decode < 1:
                raise ConfigError(f"trace.turns[{i}]", "token counts must be >= 1")

    def kv_len_after(self, turn_index: int) -> int:
        done = self.turns[: turn_index + 1]
        return self.initial_kv_len + sum(p + d for p, d in done)

    @property
    def max_kv_len(self) -> int:
        return self.kv_len_after(len(self.turns) - 1) if self.turns else self.initial_kv_len

    @property
    def prefill_tokens(self) -> int:
        return sum(p for p, _ in self.turns)

    @property
    def decode_tokens(self) -> int:
        return sum(d for _, d in self.turns)

    def to_dict(self) -> Dict[str, Any]:
        return {"turns": [list(t) for t in self.turns], "initial_kv_len": self.initial_kv_len}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WorkloadTrace":
        turns: List[Tuple[int, int]] = [tuple(t) for t in data.get("turns", [])]  # type: ignore[misc]
        return cls(turns=tuple(turns), initial_kv_len=int(data.get("initial_kv_len", 0)))

    @classmethod
    def single(cls, prefill: int, decode: int, initial_kv_len: int = 0) -> "WorkloadTrace":
        return cls(turns=((prefill, decode),), initial_kv_len=initial_kv_len)
