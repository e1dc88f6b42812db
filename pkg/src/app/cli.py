# src/app/cli.py
"""
Command-line entry point.

  python -m src.app.cli simulate --config src/config/sim_config.json --out runs/demo
  python -m src.app.cli sweep --axis hardware.preset --values NVLLM,NVLLM-12C,NVLLM-16C --jobs 3
  python -m src.app.cli validate
  python -m src.app.cli baseline --model LLaMA2-7B --preset NVLLM-16C --energy
  python -m src.app.cli roofline --models OPT-6.7B,OPT-30B --contexts 0,1024,4096

Exit codes: 0 ok, 1 failed validation or internal error, 2 config error,
3 capacity error, 4 uncorrectable read under the abort policy.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd
from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.automation.sweep import parse_values, run_sweep, write_sweep
from src.automation.validate import all_passed, format_report, run_validation
from src.baselines import BASELINE_REGISTRY, get_baseline_class
from src.config.schema import ExperimentConfig, help_epilog, load_config
from src.core.errors import ConfigError, FlashEngineError
from src.core.hw_models import available_presets, hardware_preset
from src.core.llm_models import WorkloadTrace
from src.core.roofline import load_platforms, platform_for, resolve_platform, roofline_sweep
from src.core.simulate import decode_energy, run_inference
from src.core.workload import resolve_model
from src.storage.run_writer import new_run_dir, write_run

load_dotenv(PROJECT_ROOT / ".env")

log = logging.getLogger("flashengine")

LOG_FORMAT = "[%(asctime)s][%(levelname)s][%(name)s] %(message)s"


def _setup_logging(flag: str | None, config_level: str | None = None) -> None:
    level = flag or os.getenv("FLASHENGINE_LOG_LEVEL") or config_level or "INFO"
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, datefmt="%H:%M:%S", force=True)


def _csv_list(text: str | None) -> List[str]:
    return [t.strip() for t in (text or "").split(",") if t.strip()]


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "preset", None):
        out["hardware.preset"] = args.preset
    if getattr(args, "model", None):
        out["model.name"] = args.model
    return out


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config, _overrides(args))


def _out_dir(args: argparse.Namespace, cfg: ExperimentConfig | None = None) -> Path | None:
    if args.out:
        return Path(args.out)
    env = os.getenv("FLASHENGINE_OUT_DIR")
    if env:
        return Path(env)
    return cfg.out_dir if cfg is not None else None


# =========================
# Subcommands
# =========================

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    _setup_logging(args.log_level, cfg.log_level)
    result = run_inference(
        cfg.model, cfg.trace, cfg.hw, cfg.code, cfg.fault,
        sched_enabled=cfg.sched_enabled, policy=cfg.policy,
    )
    out = Path(args.out) if args.out else new_run_dir(_out_dir(args, cfg), cfg.model.name, cfg.hw.name)
    write_run(result, out, config=cfg.to_dict())
    m = result.summary
    print(f"{cfg.model.name} on {cfg.hw.name}: {m.tokens_per_second:.3f} tok/s, "
          f"{m.seconds_per_inference:.3f} s/inf -> {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    _setup_logging(args.log_level, cfg.log_level)
    values = parse_values(args.axis, args.values or "")
    frame = run_sweep(cfg, args.axis, values, jobs=args.jobs)
    out = _out_dir(args, cfg)
    path = write_sweep(frame, out / "sweep.csv")
    print(frame.to_string(index=False) if len(frame) else f"(no values) header written to {path}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    _setup_logging(args.log_level)
    results = run_validation(
        ecdp_jobs=args.ecdp_jobs,
        scheduler_instances=args.scheduler_instances,
        seed=args.seed or 0,
        disable_correction=args.disable_correction,
    )
    print(format_report(results))
    return 0 if all_passed(results) else 1


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _load(args)
    _setup_logging(args.log_level, cfg.log_level)
    model, hw = cfg.model, cfg.hw
    kinds = _csv_list(args.kinds) or list(BASELINE_REGISTRY)

    sim = run_inference(
        model, WorkloadTrace.single(1, args.decode, initial_kv_len=args.ctx), hw, cfg.code,
        sched_enabled=cfg.sched_enabled,
    )
    nvllm_tps = sim.summary.tokens_per_second
    nvllm_energy = decode_energy(model, hw, args.ctx, cfg.code) if args.energy else None

    rows = []
    for kind in kinds:
        baseline = get_baseline_class(kind)()
        tps = baseline.throughput(model, args.ctx)
        row: Dict[str, Any] = {
            "baseline": kind,
            "tokens_per_second": tps,
            "nvllm_tokens_per_second": nvllm_tps,
            "speedup": nvllm_tps / tps if tps else float("inf"),
        }
        if nvllm_energy is not None:
            moved = baseline.token_data_movement(model, args.ctx)
            row["data_movement_mj"] = moved * 1e3
            row["nvllm_data_movement_mj"] = nvllm_energy["data_movement"] * 1e3
            row["energy_ratio"] = moved / nvllm_energy["data_movement"] if nvllm_energy["data_movement"] else float("inf")
        rows.append(row)

    frame = pd.DataFrame(rows)
    print(f"{model.name}, ctx {args.ctx}, NVLLM = {hw.name}")
    print(frame.to_string(index=False))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        frame.to_csv(Path(args.out) / "baselines.csv", index=False)
    return 0


def cmd_roofline(args: argparse.Namespace) -> int:
    _setup_logging(args.log_level)
    models = [resolve_model(m) for m in (_csv_list(args.models) or ["OPT-6.7B"])]
    names = _csv_list(args.platforms) or list(load_platforms()) + available_presets()
    platforms = [
        platform_for(hardware_preset(n)) if n in available_presets() else resolve_platform(n)
        for n in names
    ]
    contexts = [int(c) for c in (_csv_list(args.contexts) or ["0", "256", "1024", "4096"])]
    frame = roofline_sweep(models, platforms, contexts, tokens=args.tokens)
    print(frame.to_string(index=False))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        frame.to_csv(Path(args.out) / "roofline.csv", index=False)
    return 0


# =========================
# Parser
# =========================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flashengine",
        description="3D-NAND LLM inference simulator",
        epilog=help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        p.add_argument("--log-level", default=None)
        p.add_argument("--seed", type=int, default=None)
        if config:
            p.add_argument("--config", default=None, help="experiment JSON (default src/config/sim_config.json)")
            p.add_argument("--preset", default=None, help="hardware preset")
            p.add_argument("--model", default=None, help="model preset")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
        p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="run one request", epilog=help_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one run per value of a config key")
    common(p)
    p.add_argument("--axis", required=True, help="dotted config key, e.g. fault.rber")
    p.add_argument("--values", default="", help="comma separated")
    p.add_argument("--jobs", type=int, default=int(os.getenv("FLASHENGINE_JOBS", "1")))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="oracle and identity checks")
    common(p, config=False)
    p.add_argument("--ecdp-jobs", type=int, default=10_000)
    p.add_argument("--scheduler-instances", type=int, default=10_000)
    p.add_argument("--disable-correction", action="store_true", help="break the corrector (harness self-test)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", help="analytic baselines against the simulated system")
    common(p)
    p.add_argument("--kinds", default=None, help=f"comma separated, from {', '.join(BASELINE_REGISTRY)}")
    p.add_argument("--ctx", type=int, default=0)
    p.add_argument("--decode", type=int, default=8, help="decode tokens simulated for the NVLLM figure")
    p.add_argument("--energy", action="store_true", help="add per-token data-movement energy")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("roofline", help="roofline points per model, platform and context")
    common(p, config=False)
    p.add_argument("--models", default=None)
    p.add_argument("--platforms", default=None)
    p.add_argument("--contexts", default=None)
    p.add_argument("--tokens", type=int, default=1)
    p.set_defaults(func=cmd_roofline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FlashEngineError as e:
        log.error(str(e))
        return e.exit_code
    except (ValueError, FileNotFoundError) as e:
        log.error(str(e))
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
