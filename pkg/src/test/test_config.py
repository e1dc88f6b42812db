# src/test/test_config.py
from __future__ import annotations

import json

import pytest

from src.config.schema import (
    CONFIG_SCHEMA,
    DEFAULT_CONFIG_FILE,
    check_value,
    flatten,
    help_epilog,
    load_config,
    unflatten,
    validate_config,
)
from src.core.errors import ConfigError


def test_default_config_file_loads():
    cfg = load_config(DEFAULT_CONFIG_FILE)
    assert cfg.model.name == "OPT-6.7B"
    assert cfg.hw.name == "NVLLM"
    assert cfg.trace.turns == ((16, 16),)
    assert cfg.fault.rber == 0.0
    assert cfg.policy == "abort"


def test_defaults_fill_missing_keys():
    values = validate_config({})
    assert set(values) == set(CONFIG_SCHEMA)
    assert values["seed"] == 0
    assert values["ecc.correction_cycles"] == 8


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError) as exc:
        validate_config({"nand": {"clusterz": 4}})
    assert exc.value.path == "nand.clusterz"
    assert exc.value.exit_code == 2


@pytest.mark.parametrize(
    "raw, path",
    [
        ({"fault": {"rber": 2.0}}, "fault.rber"),
        ({"fault": {"rber": "high"}}, "fault.rber"),
        ({"seed": -1}, "seed"),
        ({"seed": 1.5}, "seed"),
        ({"sched": {"enabled": 1}}, "sched.enabled"),
        ({"schema_version": 2}, "schema_version"),
        ({"fault": {"uncorrectable_policy": "retry"}}, "fault.uncorrectable_policy"),
        ({"io": {"activation_bytes": 4}}, "io.activation_bytes"),
        ({"model": {"name": None}}, "model.name"),
    ],
)
def test_bad_values_rejected(raw, path):
    with pytest.raises(ConfigError) as exc:
        validate_config(raw)
    assert exc.value.path == path


def test_turns_are_checked_per_entry():
    with pytest.raises(ConfigError) as exc:
        validate_config({"trace": {"turns": [[4, 4], [0, 2]]}})
    assert exc.value.path == "trace.turns[1]"
    with pytest.raises(ConfigError):
        validate_config({"trace": {"turns": []}})


def test_root_must_be_object():
    with pytest.raises(ConfigError):
        validate_config([1, 2])


def test_flatten_unflatten():
    nested = {"seed": 3, "nand": {"clusters": 4, "page_kib": 8}}
    flat = flatten(nested)
    assert flat == {"seed": 3, "nand.clusters": 4, "nand.page_kib": 8}
    assert unflatten(flat) == nested


def test_check_value_unknown_key():
    with pytest.raises(ConfigError, match="unknown key"):
        check_value("nand.color", "red")


def test_int_accepted_for_float_keys():
    assert check_value("fault.rber", 0) == 0.0


def test_help_epilog_lists_every_key():
    text = help_epilog()
    for key in CONFIG_SCHEMA:
        assert key in text
    assert "default=preset" in text


def test_hardware_overrides(toy_config):
    cfg = load_config(toy_config, {
        "nand.clusters": 4,
        "nand.read_latency_us": 10.24,
        "dram.bandwidth_gbps": 100,
        "hardware.num_ooo_ecdp_nand": 4,
        "energy.pj_per_byte_io": 5.0,
        "sched.per_layer_bitmaps": True,
    })
    hw = cfg.hw
    assert hw.nand.num_clusters == 4
    assert hw.nand.read_latency_ps == 10_240_000
    assert hw.dram.bandwidth_bps == pytest.approx(100e9)
    assert hw.num_ooo_ecdp_nand == 4
    assert hw.energy.pj_per_byte_io == 5.0
    assert hw.sched.per_layer_bitmaps
    # untouched keys keep the preset
    assert hw.nand.page_bytes == 16 * 1024
    assert hw.energy.pj_per_byte_nand == 1.0


def test_model_file_overrides_name(toy_config):
    cfg = load_config(toy_config)
    assert cfg.model.name == "toy"
    assert cfg.model.num_layers == 2
    assert cfg.seed == 7
    assert cfg.code.weight_bits == 8


def test_config_round_trips_through_json(toy_config, tmp_path):
    cfg = load_config(toy_config)
    again = tmp_path / "again.json"
    again.write_text(json.dumps(cfg.to_dict()))
    assert load_config(again).values == cfg.values


def test_with_seed(toy_config):
    cfg = load_config(toy_config).with_seed(99)
    assert cfg.seed == 99
    assert cfg.fault.seed == 99


def test_fault_seed_key(toy_config):
    assert validate_config({"fault": {"seed": 5}})["fault.seed"] == 5
    assert load_config(toy_config).fault.seed == 7
    cfg = load_config(toy_config, {"fault.seed": 5})
    assert cfg.fault.seed == 5
    assert cfg.values["seed"] == 7
    with pytest.raises(ConfigError) as exc:
        validate_config({"fault": {"seed": -1}})
    assert exc.value.path == "fault.seed"


def test_unknown_preset_is_a_config_error(toy_config):
    with pytest.raises(ConfigError):
        load_config(toy_config, {"hardware.preset": "NVLLM-99C"})


def test_missing_file(tmp_path):
    with pytest.raises((ConfigError, FileNotFoundError)):
        load_config(tmp_path / "nope.json")
