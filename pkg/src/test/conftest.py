# src/test/conftest.py
from __future__ import annotations

import json

import pytest

from src.core.hw_models import hardware_preset
from src.core.llm_models import ModelSpec
from src.core.workload import builtin_model
from src.ecc.codec import CodeConfig, SecDedCodec


@pytest.fixture
def toy_model() -> ModelSpec:
    return ModelSpec(name="toy", num_layers=2, d_model=64, d_ffn=128, num_heads=2, head_dim=32, vocab_size=96)


@pytest.fixture
def nvllm():
    return hardware_preset("NVLLM")


@pytest.fixture
def nvllm16():
    return hardware_preset("NVLLM-16C")


@pytest.fixture
def codec() -> SecDedCodec:
    return SecDedCodec(CodeConfig())


@pytest.fixture
def llama2_7b() -> ModelSpec:
    return builtin_model("LLaMA2-7B")


@pytest.fixture
def toy_config(tmp_path):
    """Experiment JSON small enough for CLI round trips."""
    model_file = tmp_path / "toy.json"
    model_file.write_text(json.dumps({
        "name": "toy", "num_layers": 2, "d_model": 64, "d_ffn": 128,
        "num_heads": 2, "head_dim": 32, "vocab_size": 96,
    }))
    cfg = {
        "schema_version": 1,
        "seed": 7,
        "model": {"file": str(model_file)},
        "hardware": {"preset": "NVLLM"},
        "fault": {"rber": 1e-4, "uncorrectable_policy": "proceed"},
        "trace": {"turns": [[4, 4]], "initial_kv_len": 0},
        "output": {"dir": str(tmp_path / "runs")},
    }
    path = tmp_path / "sim_config.json"
    path.write_text(json.dumps(cfg))
    return path
