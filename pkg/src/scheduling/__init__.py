from .kv_scheduler import (
    Bitmap,
    KvScheduler,
    SchedDecision,
    SchedulerParams,
    derive_params,
    estimate_delta_cycles,
    per_context_cycles,
    projection_columns,
    rebalance,
    split_columns,
)
