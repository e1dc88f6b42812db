# src/app/simulations.py

from pathlib import Path

from flask import Blueprint, jsonify, request

from src.config.schema import build_experiment, validate_config
from src.core.errors import FlashEngineError
from src.core.hw_models import available_presets
from src.core.simulate import run_inference
from src.core.workload import available_models
from src.storage.run_writer import new_run_dir, write_run

bp = Blueprint("simulations", __name__)

RUNS_DIR = Path("src/storage/sim_runs")


@bp.route("/presets", methods=["GET"])
def list_presets():
    return jsonify({"hardware": available_presets(), "models": available_models()})


@bp.route("/simulations", methods=["POST"])
def create_simulation():
    """
    Body is an experiment config (same keys as the JSON config files).
    The run is persisted under src/storage/sim_runs/<model>/<hardware>/<run_id>/.
    """
    data = request.json or {}

    try:
        cfg = build_experiment(validate_config(data))
        result = run_inference(
            cfg.model, cfg.trace, cfg.hw, cfg.code, cfg.fault,
            sched_enabled=cfg.sched_enabled, policy=cfg.policy,
        )
    except FlashEngineError as e:
        return jsonify({"error": str(e), "exit_code": e.exit_code, "path": getattr(e, "path", None)}), 400

    run_dir = new_run_dir(RUNS_DIR, cfg.model.name, cfg.hw.name)
    write_run(result, run_dir, config=cfg.to_dict())

    # light summary; the token trace stays on disk
    response = {
        "model": cfg.model.name,
        "hardware": cfg.hw.name,
        "run_id": run_dir.name,
        "summary": result.summary.to_dict(),
        "num_passes": len(result.tokens),
    }
    return jsonify(response)
