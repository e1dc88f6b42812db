# src/config/schema.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Tuple

from src.core.errors import ConfigError
from src.core.hw_models import GIB, KIB, HwConfig, hardware_preset
from src.core.llm_models import ModelSpec, WorkloadTrace
from src.core.workload import builtin_model, load_model_file
from src.ecc.codec import CodeConfig
from src.ecc.faults import U64, FaultModel
from src.engine.erdpe import POLICIES
from src.storage.load_presets import CONFIG_DIR, load_json

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CONFIG_FILE = CONFIG_DIR / "sim_config.json"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

PRESET = "preset"   # shown as the default of keys that fall back to the hardware preset


@dataclass(frozen=True)
class ConfigKey:
    kind: str                      # int | float | bool | str | turns
    default: Any
    help: str
    min: float | None = None
    max: float | None = None
    choices: Tuple[Any, ...] | None = None
    nullable: bool = False


# =========================
# The one schema
# =========================
# Every experiment key, in dotted form. Validation, defaults, the CLI epilog
# and the README table are all generated from this table.

CONFIG_SCHEMA: Dict[str, ConfigKey] = {
    "schema_version": ConfigKey("int", SCHEMA_VERSION, "config format version", choices=(SCHEMA_VERSION,)),
    "seed": ConfigKey("int", 0, "top-level seed; every random stream derives from it", min=0, max=U64),
    "system.log_level": ConfigKey("str", "INFO", "logging level", choices=LOG_LEVELS),

    "model.name": ConfigKey("str", "OPT-6.7B", "built-in model preset (src/config/models.json)"),
    "model.file": ConfigKey("str", None, "JSON model file; overrides model.name", nullable=True),

    "hardware.preset": ConfigKey("str", "NVLLM", "hardware preset (src/config/hardware.json)"),
    "hardware.num_ooo_ecdp_nand": ConfigKey("int", None, "OoO-ECDP lanes on the NAND CMOS", min=0, nullable=True),
    "hardware.num_ooo_ecdp_npu": ConfigKey("int", None, "OoO-ECDP lanes on the NPU", min=0, nullable=True),
    "hardware.npu_clock_mhz": ConfigKey("float", None, "NPU clock", min=1, nullable=True),
    "hardware.npu_lane_width": ConfigKey("int", None, "weights per NPU lane per cycle", min=1, nullable=True),

    "nand.clusters": ConfigKey("int", None, "plane clusters", min=0, nullable=True),
    "nand.planes_per_cluster": ConfigKey("int", None, "planes per cluster", min=1, nullable=True),
    "nand.page_kib": ConfigKey("int", None, "page size in KiB (power of two)", min=1, nullable=True),
    "nand.read_latency_us": ConfigKey("float", None, "page read latency", min=0.001, nullable=True),
    "nand.fifo_pages": ConfigKey("int", None, "cluster FIFO depth in pages", min=2, nullable=True),
    "nand.clock_mhz": ConfigKey("float", None, "NAND CMOS clock", min=1, nullable=True),
    "nand.lane_width": ConfigKey("int", None, "segment factor d (weights per segment)", min=1, nullable=True),
    "nand.plane_capacity_gib": ConfigKey("float", None, "capacity per plane", min=0.001, nullable=True),
    "nand.cache_read": ConfigKey("bool", None, "page buffer accepts a new read while the last page waits", nullable=True),
    "nand.prefetch": ConfigKey("bool", None, "first page of each stage overlaps the previous stage", nullable=True),

    "dram.bandwidth_gbps": ConfigKey("float", None, "aggregate DRAM bandwidth (GB/s)", min=0.001, nullable=True),
    "dram.channels": ConfigKey("int", None, "DRAM channels", min=1, nullable=True),
    "dram.latency_ns": ConfigKey("float", None, "fixed access latency", min=0, nullable=True),
    "dram.capacity_gib": ConfigKey("float", None, "DRAM capacity", min=0.001, nullable=True),

    "io.bandwidth_gbps": ConfigKey("float", None, "NAND CMOS to NPU link (GB/s)", min=0.001, nullable=True),
    "io.activation_bytes": ConfigKey("int", None, "bytes per activation on the link", choices=(1, 2), nullable=True),

    "ecc.data_bits": ConfigKey("int", 64, "data bits per SEC-DED subword", min=1),
    "ecc.parity_bits": ConfigKey("int", 8, "parity bits per subword (Hamming + overall parity)", min=2),
    "ecc.correction_cycles": ConfigKey("int", 8, "corrector latency per dirty segment", min=1),

    "fault.rber": ConfigKey("float", 0.0, "raw bit error rate of NAND reads", min=0.0, max=1.0),
    "fault.uncorrectable_policy": ConfigKey("str", "abort", "on a double flip: abort the run or proceed corrupted", choices=POLICIES),
    "fault.seed": ConfigKey("int", None, "fault stream seed; overrides the top-level seed when set", min=0, max=U64, nullable=True),

    "sched.enabled": ConfigKey("bool", True, "KV-aware bitmap scheduling"),
    "sched.c_npu_cycles": ConfigKey("int", None, "NPU cycles per projection column (derived when unset)", min=1, nullable=True),
    "sched.per_layer_bitmaps": ConfigKey("bool", False, "one bitmap per layer instead of one shared"),
    "sched.prefill_npu_share": ConfigKey("float", None, "NPU share of prefill columns (peak-throughput split when unset)", min=0.0, max=1.0, nullable=True),

    "trace.turns": ConfigKey("turns", [[16, 16]], "[[prefill, decode], ...] per turn"),
    "trace.initial_kv_len": ConfigKey("int", 0, "KV entries already cached before the first turn", min=0),

    "energy.pj_per_byte_nand": ConfigKey("float", None, "NAND array to NAND CMOS", min=0, nullable=True),
    "energy.pj_per_byte_io": ConfigKey("float", None, "NAND CMOS to NPU", min=0, nullable=True),
    "energy.pj_per_byte_dram": ConfigKey("float", None, "NPU to DRAM", min=0, nullable=True),
    "energy.pj_per_op_mac": ConfigKey("float", None, "per MAC", min=0, nullable=True),
    "energy.static_w_npu": ConfigKey("float", None, "NPU static power (W)", min=0, nullable=True),
    "energy.static_w_nand_cmos": ConfigKey("float", None, "NAND CMOS static power (W)", min=0, nullable=True),

    "output.dir": ConfigKey("str", "runs", "directory for run artifacts"),
}


def default_values() -> Dict[str, Any]:
    return {k: _copy(spec.default) for k, spec in CONFIG_SCHEMA.items()}


def _copy(value: Any) -> Any:
    return [list(v) for v in value] if isinstance(value, list) else value


def help_epilog() -> str:
    lines = ["config keys (dotted path, type, default):"]
    for key, spec in CONFIG_SCHEMA.items():
        default = PRESET if spec.default is None and key.split(".")[0] in _PRESET_SECTIONS else spec.default
        extra = f" one of {list(spec.choices)}" if spec.choices else ""
        lines.append(f"  {key:<30} {spec.kind:<6} default={default}  {spec.help}{extra}")
    return "\n".join(lines)


def schema_table() -> List[Dict[str, Any]]:
    """Rows for docs: key, type, default, help."""
    return [
        {"key": k, "type": s.kind, "default": s.default, "help": s.help}
        for k, s in CONFIG_SCHEMA.items()
    ]


# =========================
# Validation
# =========================

_PRESET_SECTIONS = {"hardware", "nand", "dram", "io", "energy"}


def flatten(raw: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, prefix=f"{path}."))
        else:
            out[path] = value
    return out


def unflatten(values: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        if "." in key:
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        else:
            nested[key] = value
    return nested


def _check(path: str, spec: ConfigKey, value: Any) -> Any:
    if value is None:
        if spec.nullable:
            return None
        raise ConfigError(path, "must not be null")

    if spec.kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false (got {value!r})")
    elif spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer (got {value!r})")
    elif spec.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number (got {value!r})")
        value = float(value)
    elif spec.kind == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string (got {value!r})")
    elif spec.kind == "turns":
        if not isinstance(value, list) or not value:
            raise ConfigError(path, "expected a non-empty list of [prefill, decode] pairs")
        for i, turn in enumerate(value):
            ok = isinstance(turn, (list, tuple)) and len(turn) == 2 and all(
                isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in turn
            )
            if not ok:
                raise ConfigError(f"{path}[{i}]", f"expected [prefill >= 1, decode >= 1] (got {turn!r})")
        value = [list(t) for t in value]

    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(path, f"must be one of {list(spec.choices)} (got {value!r})")
    if spec.min is not None and value < spec.min:
        raise ConfigError(path, f"must be >= {spec.min} (got {value})")
    if spec.max is not None and value > spec.max:
        raise ConfigError(path, f"must be <= {spec.max} (got {value})")
    return value


def check_value(path: str, value: Any) -> Any:
    if path not in CONFIG_SCHEMA:
        raise ConfigError(path, "unknown key")
    return _check(path, CONFIG_SCHEMA[path], value)


def validate_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Flattened, type-checked values with defaults filled in. Unknown keys raise ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config root must be a JSON object")
    values = default_values()
    for path, value in flatten(raw).items():
        if path not in CONFIG_SCHEMA:
            raise ConfigError(path, "unknown key")
        values[path] = _check(path, CONFIG_SCHEMA[path], value)
    return values


# =========================
# Experiment assembly
# =========================

@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    hw: HwConfig
    trace: WorkloadTrace
    fault: FaultModel
    code: CodeConfig
    policy: str = "abort"
    sched_enabled: bool = True
    out_dir: Path = Path("runs")
    log_level: str = "INFO"
    values: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.fault.seed

    def to_dict(self) -> Dict[str, Any]:
        """Nested form, readable by load_config."""
        return unflatten(self.values)

    def with_value(self, path: str, value: Any) -> "ExperimentConfig":
        values = dict(self.values)
        values[path] = check_value(path, value)
        return build_experiment(values)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.with_value("seed", int(seed))


def _hardware(values: Dict[str, Any]) -> HwConfig:
    hw = hardware_preset(values["hardware.preset"])

    def given(key: str) -> bool:
        return values.get(key) is not None

    nand: Dict[str, Any] = {}
    for key, attr, scale in (
        ("nand.clusters", "num_clusters", 1),
        ("nand.planes_per_cluster", "planes_per_cluster", 1),
        ("nand.page_kib", "page_bytes", KIB),
        ("nand.fifo_pages", "fifo_pages", 1),
        ("nand.lane_width", "lane_width", 1),
    ):
        if given(key):
            nand[attr] = int(values[key]) * scale
    if given("nand.read_latency_us"):
        nand["read_latency_ps"] = int(round(values["nand.read_latency_us"] * 1e6))
    if given("nand.clock_mhz"):
        nand["clock_hz"] = int(round(values["nand.clock_mhz"] * 1e6))
    if given("nand.plane_capacity_gib"):
        nand["plane_capacity_bytes"] = int(values["nand.plane_capacity_gib"] * GIB)
    for key in ("nand.cache_read", "nand.prefetch"):
        if given(key):
            nand[key.split(".")[1]] = values[key]

    dram: Dict[str, Any] = {}
    if given("dram.bandwidth_gbps"):
        dram["bandwidth_bps"] = values["dram.bandwidth_gbps"] * 1e9
    if given("dram.channels"):
        dram["channels"] = values["dram.channels"]
    if given("dram.latency_ns"):
        dram["latency_ps"] = int(round(values["dram.latency_ns"] * 1e3))
    if given("dram.capacity_gib"):
        dram["capacity_bytes"] = int(values["dram.capacity_gib"] * GIB)

    io: Dict[str, Any] = {}
    if given("io.bandwidth_gbps"):
        io["bandwidth_bps"] = values["io.bandwidth_gbps"] * 1e9
    if given("io.activation_bytes"):
        io["activation_bytes"] = values["io.activation_bytes"]

    energy = {
        key.split(".")[1]: values[key]
        for key in CONFIG_SCHEMA
        if key.startswith("energy.") and given(key)
    }

    top: Dict[str, Any] = {}
    for key in ("hardware.num_ooo_ecdp_nand", "hardware.num_ooo_ecdp_npu", "hardware.npu_lane_width"):
        if given(key):
            top[key.split(".")[1]] = values[key]
    if given("hardware.npu_clock_mhz"):
        top["npu_clock_hz"] = int(round(values["hardware.npu_clock_mhz"] * 1e6))

    sched = replace(
        hw.sched,
        enabled=values["sched.enabled"],
        c_npu_cycles=values["sched.c_npu_cycles"],
        per_layer_bitmaps=values["sched.per_layer_bitmaps"],
        prefill_npu_share=values["sched.prefill_npu_share"],
    )
    return hw.with_overrides(
        nand=replace(hw.nand, **nand),
        dram=replace(hw.dram, **dram),
        io=replace(hw.io, **io),
        energy=replace(hw.energy, **energy),
        sched=sched,
        **top,
    )


def build_experiment(values: Dict[str, Any]) -> ExperimentConfig:
    """Validated flat values -> fully constructed experiment. Raises ConfigError."""
    if values.get("model.file"):
        model = load_model_file(values["model.file"], name=None)
    else:
        model = builtin_model(values["model.name"])

    hw = _hardware(values)
    code = CodeConfig(
        data_bits_per_subword=values["ecc.data_bits"],
        parity_bits_per_subword=values["ecc.parity_bits"],
        lane_width=hw.nand.lane_width,
        weight_bits=8 * model.bytes_per_weight,
        correction_cycles=values["ecc.correction_cycles"],
    )
    trace = WorkloadTrace(
        turns=tuple(tuple(t) for t in values["trace.turns"]),
        initial_kv_len=values["trace.initial_kv_len"],
    )
    fault_seed = values["fault.seed"] if values.get("fault.seed") is not None else values["seed"]
    fault = FaultModel(rber=values["fault.rber"], seed=fault_seed)
    return ExperimentConfig(
        model=model,
        hw=hw,
        trace=trace,
        fault=fault,
        code=code,
        policy=values["fault.uncorrectable_policy"],
        sched_enabled=values["sched.enabled"],
        out_dir=Path(values["output.dir"]),
        log_level=values["system.log_level"],
        values=dict(values),
    )


def load_config(path: Path | str | None = None, overrides: Dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Read, validate and assemble an experiment config. `overrides` are dotted
    keys applied on top of the file (CLI flags). Nothing is simulated here.
    """
    path = Path(path) if path is not None else DEFAULT_CONFIG_FILE
    raw = load_json(path)
    log.debug(f"Loaded config from {path}")
    values = validate_config(raw)
    for key, value in (overrides or {}).items():
        values[key] = check_value(key, value)
    return build_experiment(values)
