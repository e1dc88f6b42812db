# src/automation/sweep.py
"""
Parameter sweeps: one simulation per value of a single config key, every
run sharing the base seed. Runs fan out over a process pool; rows come back
in value order whatever the pool size.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd

PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.config.schema import CONFIG_SCHEMA, ExperimentConfig, build_experiment, check_value, load_config
from src.core.errors import ConfigError, FlashEngineError
from src.core.simulate import run_inference

log = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "axis",
    "value",
    "model",
    "hardware",
    "seed",
    "tokens_per_second",
    "seconds_per_inference",
    "prefill_fraction",
    "energy_joules_per_token",
    "data_movement_joules",
    "stall_fraction",
    "corrected_segments",
    "uncorrectable_segments",
    "scheduler_events",
    "error",
]


def parse_values(axis: str, text: str) -> List[Any]:
    """Comma-separated CLI values, each read as JSON when it parses, else as a string."""
    if axis not in CONFIG_SCHEMA:
        raise ConfigError(axis, "unknown sweep axis")
    out: List[Any] = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        try:
            value = json.loads(item)
        except json.JSONDecodeError:
            value = item
        out.append(check_value(axis, value))
    return out


def _run_point(axis: str, value: Any, values: Dict[str, Any]) -> Dict[str, Any]:
    row: Dict[str, Any] = {"axis": axis, "value": value}
    try:
        cfg = build_experiment(values)
        result = run_inference(
            cfg.model, cfg.trace, cfg.hw, cfg.code, cfg.fault,
            sched_enabled=cfg.sched_enabled, policy=cfg.policy,
        )
    except FlashEngineError as e:
        # a failed point stays in the matrix with its reason
        row.update({"model": values.get("model.name"), "hardware": values.get("hardware.preset"),
                    "seed": values.get("seed"), "error": f"exit {e.exit_code}: {e}"})
        return row
    m = result.summary
    row.update({
        "model": cfg.model.name,
        "hardware": cfg.hw.name,
        "seed": cfg.seed,
        "tokens_per_second": m.tokens_per_second,
        "seconds_per_inference": m.seconds_per_inference,
        "prefill_fraction": m.prefill_fraction,
        "energy_joules_per_token": m.energy_joules_per_token,
        "data_movement_joules": m.data_movement_joules,
        "stall_fraction": m.stall_fraction,
        "corrected_segments": m.corrected_segments,
        "uncorrectable_segments": m.uncorrectable_segments,
        "scheduler_events": m.scheduler_events,
        "error": "",
    })
    return row


def run_sweep(cfg: ExperimentConfig, axis: str, values: Sequence[Any], jobs: int = 1) -> pd.DataFrame:
    if axis not in CONFIG_SCHEMA:
        raise ConfigError(axis, "unknown sweep axis")
    if jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    points = []
    for value in values:
        flat = dict(cfg.values)
        flat[axis] = check_value(axis, value)
        points.append((axis, flat[axis], flat))

    log.info(f"Sweeping {axis} over {len(points)} value(s) with {jobs} job(s)")
    rows: List[Dict[str, Any] | None] = [None] * len(points)
    if jobs == 1 or len(points) <= 1:
        for i, point in enumerate(points):
            rows[i] = _run_point(*point)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(_run_point, *point): i for i, point in enumerate(points)}
            for future in as_completed(futures):
                rows[futures[future]] = future.result()

    return pd.DataFrame([r for r in rows if r is not None], columns=SWEEP_COLUMNS)


def write_sweep(frame: pd.DataFrame, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    log.info(f"Wrote {len(frame)} sweep row(s) to {path}")
    return path


if __name__ == "__main__":
    logging.basicConfig(
        level=os.getenv("FLASHENGINE_LOG_LEVEL", "INFO"),
        format="[%(asctime)s][%(levelname)s][%(name)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    parser = argparse.ArgumentParser(description="Sweep one config key")
    parser.add_argument("--config", default=None)
    parser.add_argument("--axis", required=True)
    parser.add_argument("--values", required=True, help="comma separated")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="sweep.csv")
    args = parser.parse_args()

    base = load_config(args.config)
    frame = run_sweep(base, args.axis, parse_values(args.axis, args.values), jobs=args.jobs)
    write_sweep(frame, args.out)
