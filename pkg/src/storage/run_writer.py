# src/storage/run_writer.py
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

from src.core.models import TOKEN_FIELDS, Metrics, SimResult, TokenRecord

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"
TOKENS_FILE = "tokens.csv"
SUMMARY_FILE = "summary.txt"
CONFIG_FILE = "config.json"

_FLOAT_FIELDS = {"stall_fraction"}
_STR_FIELDS = {"phase"}


def new_run_dir(base: Path | str, *parts: str) -> Path:
    """<base>/<parts...>/<UTC timestamp>/, created."""
    run_id = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    run_dir = Path(base).joinpath(*parts, run_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def format_summary(result: SimResult) -> str:
    m = result.summary
    info = result.run_info
    lines = [
        f"model            {info.get('model')}",
        f"hardware         {info.get('hardware')}",
        f"seed             {info.get('seed')}",
        f"rber             {info.get('rber')}",
        f"scheduler        {'on' if info.get('sched_enabled') else 'off'}",
        "",
        f"tokens/s         {m.tokens_per_second:.4f}",
        f"s/inference      {m.seconds_per_inference:.4f}",
        f"prefill          {m.prefill_seconds:.4f} s ({m.prefill_fraction:.1%})",
        f"decode           {m.decode_seconds:.4f} s",
        f"stall fraction   {m.stall_fraction:.4f}",
        f"corrected        {m.corrected_segments}",
        f"uncorrectable    {m.uncorrectable_segments}",
        f"sched events     {m.scheduler_events}",
        "",
        f"energy/token     {m.energy_joules_per_token * 1e3:.4f} mJ",
        f"  nand path      {m.path_energy.get('nand', 0.0) * 1e3:.4f} mJ",
        f"  io path        {m.path_energy.get('io', 0.0) * 1e3:.4f} mJ",
        f"  dram path      {m.path_energy.get('dram', 0.0) * 1e3:.4f} mJ",
        f"  mac            {m.mac_joules * 1e3:.4f} mJ",
        f"  static         {m.static_joules * 1e3:.4f} mJ",
    ]
    return "\n".join(lines) + "\n"


def write_run(result: SimResult, out_dir: Path | str, config: Dict[str, Any] | None = None) -> Path:
    """
    Files:
      - metrics.json  (summary + run identity, sorted keys)
      - tokens.csv    (one row per forward pass)
      - summary.txt   (human readable)
      - config.json   (the validated config, when given)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / METRICS_FILE, "w") as f:
        json.dump(
            {
                "summary": result.summary.to_dict(),
                "run_info": result.run_info,
                "event_counts": result.event_counts,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")

    with open(out_dir / TOKENS_FILE, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TOKEN_FIELDS)
        writer.writeheader()
        for row in result.tokens:
            writer.writerow({k: row[k] for k in TOKEN_FIELDS})

    (out_dir / SUMMARY_FILE).write_text(format_summary(result))

    if config is not None:
        with open(out_dir / CONFIG_FILE, "w") as f:
            json.dump(config, f, indent=2)
            f.write("\n")

    log.info(f"Wrote run artifacts to {out_dir}")
    return out_dir


# =========================
# Readers
# =========================

def load_metrics(path: Path | str) -> Tuple[Metrics, Dict[str, Any]]:
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_FILE
    with open(path, "r") as f:
        data = json.load(f)
    return Metrics.from_dict(data["summary"]), data.get("run_info", {})


def load_tokens(path: Path | str) -> List[TokenRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / TOKENS_FILE
    rows: List[TokenRecord] = []
    with open(path, "r", newline="") as f:
        for raw in csv.DictReader(f):
            row: Dict[str, Any] = {}
            for key in TOKEN_FIELDS:
                value = raw[key]
                if key in _STR_FIELDS:
                    row[key] = value
                elif key in _FLOAT_FIELDS:
                    row[key] = float(value)
                else:
                    row[key] = int(value)
            rows.append(row)  # type: ignore[arg-type]
    return rows


def load_run(path: Path | str) -> SimResult:
    path = Path(path)
    with open(path / METRICS_FILE, "r") as f:
        data = json.load(f)
    return SimResult(
        summary=Metrics.from_dict(data["summary"]),
        tokens=load_tokens(path),
        run_info=data.get("run_info", {}),
        event_counts=data.get("event_counts", {}),
    )
