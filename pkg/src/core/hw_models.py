# src/core/hw_models.py
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Type, TypeVar

from src.core.errors import ConfigError
from src.storage.load_presets import load_preset_file

HARDWARE_FILE = "hardware.json"

PS_PER_S = 10**12
KIB = 1024
GIB = 1024**3

T = TypeVar("T")


def cycles_to_ps(cycles: int, clock_hz: int) -> int:
    """Whole picoseconds needed for `cycles` at `clock_hz`, rounded up."""
    return -(-int(cycles) * PS_PER_S // int(clock_hz))


def ps_to_cycles(ps: int, clock_hz: int) -> int:
    return int(ps) * int(clock_hz) // PS_PER_S


def bytes_to_ps(num_bytes: float, bytes_per_s: float) -> int:
    if num_bytes <= 0:
        return 0
    return int(round(num_bytes * PS_PER_S / bytes_per_s))


def _from_dict(cls: Type[T], data: Dict[str, Any], prefix: str) -> T:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", "unknown key")
    return cls(**data)


# =========================
# NAND side
# =========================

@dataclass(frozen=True)
class NandConfig:
    num_clusters: int = 8
    planes_per_cluster: int = 4
    page_bytes: int = 16 * KIB
    read_latency_ps: int = 5_120_000          # 5.12 us
    fifo_pages: int = 2                       # cluster FIFO, double buffer
    clock_hz: int = 350_000_000               # NAND CMOS
    lane_width: int = 32                      # d weights per cycle
    plane_capacity_bytes: int = 4 * GIB
    cache_read: bool = True                   # page buffer serves a new read while the last page waits
    prefetch: bool = True                     # first page of a stage overlaps the previous stage

    def __post_init__(self) -> None:
        if self.num_clusters < 0:
            raise ConfigError("nand.clusters", "must be >= 0")
        if self.planes_per_cluster < 1:
            raise ConfigError("nand.planes_per_cluster", "must be >= 1")
        if self.page_bytes <= 0 or self.page_bytes & (self.page_bytes - 1):
            raise ConfigError("nand.page_kib", f"page size must be a power of two (got {self.page_bytes} B)")
        if self.read_latency_ps <= 0:
            raise ConfigError("nand.read_latency_us", "must be > 0")
        if self.fifo_pages < 2:
            raise ConfigError("nand.fifo_pages", "must be >= 2 (double buffering)")
        if self.clock_hz <= 0:
            raise ConfigError("nand.clock_mhz", "must be > 0")
        if self.lane_width <= 0:
            raise ConfigError("nand.lane_width", "must be > 0")
        if self.plane_capacity_bytes <= 0:
            raise ConfigError("nand.plane_capacity_gib", "must be > 0")

    @property
    def num_planes(self) -> int:
        return self.num_clusters * self.planes_per_cluster

    @property
    def capacity_bytes(self) -> int:
        return self.num_planes * self.plane_capacity_bytes


# =========================
# DRAM / IO / energy / scheduler knobs
# =========================

@dataclass(frozen=True)
class DramConfig:
    bandwidth_bps: float = 68.264e9           # 2 x LPDDR5X-8533, x64 aggregate
    channels: int = 2
    latency_ps: int = 100_000
    capacity_bytes: int = 12 * GIB

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ConfigError("dram.bandwidth_gbps", "must be > 0")
        if self.channels < 1:
            raise ConfigError("dram.channels", "must be >= 1")
        if self.latency_ps < 0:
            raise ConfigError("dram.latency_ns", "must be >= 0")
        if self.capacity_bytes <= 0:
            raise ConfigError("dram.capacity_gib", "must be > 0")


@dataclass(frozen=True)
class IoConfig:
    bandwidth_bps: float = 16e9               # NAND CMOS <-> NPU link
    activation_bytes: int = 2                 # activations cross the link in BF16

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ConfigError("io.bandwidth_gbps", "must be > 0")
        if self.activation_bytes not in (1, 2):
            raise ConfigError("io.activation_bytes", "must be 1 or 2")


@dataclass(frozen=True)
class EnergyConstants:
    """Calibration knobs, not measured ground truth."""
    pj_per_byte_nand: float = 1.0             # NAND array -> NAND CMOS
    pj_per_byte_io: float = 10.0              # NAND CMOS -> NPU
    pj_per_byte_dram: float = 15.0            # NPU <-> DRAM
    pj_per_op_mac: float = 0.2
    static_w_npu: float = 0.240149
    static_w_nand_cmos: float = 0.895677

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"energy.{f.name}", "must be >= 0")


@dataclass(frozen=True)
class SchedConfig:
    enabled: bool = True
    c_npu_cycles: int | None = None           # None: derived from the NPU lane count
    per_layer_bitmaps: bool = False
    prefill_npu_share: float | None = None    # None: split by peak throughput

    def __post_init__(self) -> None:
        if self.c_npu_cycles is not None and self.c_npu_cycles <= 0:
            raise ConfigError("sched.c_npu_cycles", "must be > 0")
        if self.prefill_npu_share is not None and not 0.0 <= self.prefill_npu_share <= 1.0:
            raise ConfigError("sched.prefill_npu_share", "must be in [0, 1]")


@dataclass(frozen=True)
class HwConfig:
    name: str = "custom"
    nand: NandConfig = field(default_factory=NandConfig)
    num_ooo_ecdp_nand: int = 8
    num_ooo_ecdp_npu: int = 4                 # run without ECC
    npu_clock_hz: int = 500_000_000
    npu_lane_width: int = 32
    dram: DramConfig = field(default_factory=DramConfig)
    io: IoConfig = field(default_factory=IoConfig)
    energy: EnergyConstants = field(default_factory=EnergyConstants)
    sched: SchedConfig = field(default_factory=SchedConfig)

    def __post_init__(self) -> None:
        if self.num_ooo_ecdp_nand < 0:
            raise ConfigError("hardware.num_ooo_ecdp_nand", "must be >= 0")
        if self.num_ooo_ecdp_npu < 0:
            raise ConfigError("hardware.num_ooo_ecdp_npu", "must be >= 0")
        if self.npu_clock_hz <= 0:
            raise ConfigError("hardware.npu_clock_mhz", "must be > 0")
        if self.npu_lane_width <= 0:
            raise ConfigError("hardware.npu_lane_width", "must be > 0")

    # MAC rates; one ECDP consumes one d-weight segment per cycle
    @property
    def nand_macs_per_s(self) -> int:
        return self.num_ooo_ecdp_nand * self.nand.lane_width * self.nand.clock_hz

    @property
    def npu_macs_per_s(self) -> int:
        return self.num_ooo_ecdp_npu * self.npu_lane_width * self.npu_clock_hz

    def with_overrides(self, **changes: Any) -> "HwConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HwConfig":
        data = dict(data)
        sub = {
            "nand": NandConfig,
            "dram": DramConfig,
            "io": IoConfig,
            "energy": EnergyConstants,
            "sched": SchedConfig,
        }
        for key, sub_cls in sub.items():
            if key in data and isinstance(data[key], dict):
                data[key] = _from_dict(sub_cls, data[key], key)
        return _from_dict(cls, data, "hardware")


def peak_throughput(hw: HwConfig) -> float:
    """ops/s; one MAC counts as two ops."""
    return float(2 * (hw.nand_macs_per_s + hw.npu_macs_per_s))


# =========================
# Presets
# =========================

def _hardware_rows() -> Dict[str, Any]:
    return load_preset_file(HARDWARE_FILE)


def available_presets() -> List[str]:
    return list(_hardware_rows()["presets"].keys())


def default_energy() -> EnergyConstants:
    return _from_dict(EnergyConstants, _hardware_rows().get("energy", {}), "energy")


def hardware_preset(name: str) -> HwConfig:
    data = _hardware_rows()
    presets = data["presets"]
    if name not in presets:
        raise ConfigError(
            "hardware.preset",
            f"Unknown hardware preset: {name}. Available: {', '.join(presets)}",
        )
    row = {k: v for k, v in presets[name].items() if k != "note"}
    row.setdefault("energy", data.get("energy", {}))
    row["name"] = name
    return HwConfig.from_dict(row)
