# src/core/workload.py
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List

from src.core.errors import ConfigError
from src.core.llm_models import PRECISION_BYTES, ComponentBreakdown, ModelSpec
from src.storage.load_presets import load_json, load_preset_file

log = logging.getLogger(__name__)

MODELS_FILE = "models.json"


def _model_rows() -> Dict[str, Any]:
    return load_preset_file(MODELS_FILE)


def available_models() -> List[str]:
    return sorted(_model_rows()["models"].keys())


def _spec_from_row(name: str, row: Dict[str, Any], families: Dict[str, Any]) -> ModelSpec:
    row = dict(row)
    family = row.pop("family", None)
    fields: Dict[str, Any] = {}
    if family is not None:
        if family not in families:
            raise ConfigError(f"models.{name}.family", f"unknown family {family!r}")
        fields.update({k: v for k, v in families[family].items() if k != "note"})
    fields.update(row)
    fields["name"] = name
    return ModelSpec.from_dict(fields)


def builtin_model(name: str) -> ModelSpec:
    data = _model_rows()
    rows = data["models"]
    if name not in rows:
        raise ConfigError(
            "model.name",
            f"Unknown model: {name}. Available: {', '.join(sorted(rows))}",
        )
    return _spec_from_row(name, rows[name], data.get("families", {}))


def load_model_file(path: Path | str, name: str | None = None) -> ModelSpec:
    """
    Load a ModelSpec from JSON. Accepts either a single model object or
    the preset layout {"families": ..., "models": {name: row}}.
    """
    data = load_json(path)
    if "models" in data:
        rows = data["models"]
        if name is None:
            if len(rows) != 1:
                raise ConfigError("model.name", f"{path} holds {len(rows)} models; name one")
            name = next(iter(rows))
        if name not in rows:
            raise ConfigError("model.name", f"Unknown model: {name}. Available: {', '.join(sorted(rows))}")
        return _spec_from_row(name, rows[name], data.get("families", {}))
    fields = dict(data)
    fields.setdefault("name", name or Path(path).stem)
    return ModelSpec.from_dict(fields)


def resolve_model(ref: str) -> ModelSpec:
    """A preset name, or a path to a JSON model file."""
    if ref.endswith(".json") or Path(ref).exists():
        return load_model_file(ref)
    return builtin_model(ref)


def derive_breakdown(spec: ModelSpec) -> ComponentBreakdown:
    b = spec.bytes_per_weight
    h = spec.d_model
    layers = spec.num_layers

    attn_weights = layers * (h * spec.q_dim + 2 * h * spec.kv_dim + spec.q_dim * h)
    ffn_weights = layers * spec.ffn_matrices * h * spec.d_ffn
    embedding_weights = spec.vocab_size * h + spec.max_positions * h
    lm_head_weights = spec.vocab_size * h

    norm_width = 2 * h if spec.norm_kind == "layernorm" else h
    norm_weights = (2 * layers + 1) * norm_width

    return ComponentBreakdown(
        attention_proj_bytes=attn_weights * b,
        ffn_bytes=ffn_weights * b,
        embedding_bytes=embedding_weights * b,
        lm_head_bytes=0 if spec.tied_embeddings else lm_head_weights * b,
        norm_bytes=norm_weights * b,
        attention_proj_ops=2 * attn_weights,
        ffn_ops=2 * ffn_weights,
        lm_head_ops=2 * lm_head_weights,
        # softmax, norms and residuals
        misc_ops=h * layers,
        agg_ops_per_ctx=2 * 2 * h * layers,
        kv_bytes_per_ctx=2 * spec.kv_dim * layers * PRECISION_BYTES[spec.kv_precision],
    )


def ffn_fraction(spec: ModelSpec) -> float:
    bd = derive_breakdown(spec)
    total = bd.total_bytes
    return bd.ffn_bytes / total if total else 0.0
