# src/core/energy.py
from __future__ import annotations

from typing import Dict, Iterable

from src.core.hw_models import PS_PER_S, EnergyConstants
from src.core.models import TokenRecord

PJ = 1e-12


def energy_report(token_log: Iterable[TokenRecord], constants: EnergyConstants) -> Dict[str, float]:
    """
    Joules per path over a completed run. Data movement covers three paths:
    NAND array -> NAND CMOS, NAND CMOS -> NPU (activations and logits only)
    and NPU <-> DRAM. MAC energy and static power are reported separately.
    """
    nand = io = dram = macs = 0
    ps = 0
    for row in token_log:
        nand += row["nand_bytes"]
        io += row["io_bytes"]
        dram += row["dram_bytes"]
        macs += row["macs"]
        ps += row["time_ps"]

    path = {
        "nand": nand * constants.pj_per_byte_nand * PJ,
        "io": io * constants.pj_per_byte_io * PJ,
        "dram": dram * constants.pj_per_byte_dram * PJ,
    }
    moved = path["nand"] + path["io"] + path["dram"]
    # one MAC = two ops
    mac = 2 * macs * constants.pj_per_op_mac * PJ
    static = (constants.static_w_npu + constants.static_w_nand_cmos) * ps / PS_PER_S
    return {
        **path,
        "data_movement": moved,
        "mac": mac,
        "static": static,
        "total": moved + mac + static,
    }
