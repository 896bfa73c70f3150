"""Graph classification over learned predictive subgraphs.

The heavy lifting lives in the compiled extension; this package re-exports
the data pipeline (TU parsing, synthetic generation, fold splitting), the
conformal-prediction primitives, the reward function and the full training
loop.
"""

from cores._core import (
    DatasetSplit,
    Graph,
    PredictionSet,
    RewardBreakdown,
    Subgraph,
    aps_score,
    apply_action,
    calibrate,
    compute_reward,
    generate_ba_shapes,
    num_classes,
    parse_tu_dataset,
    performance_reward,
    prediction_set,
    split_folds,
    sparsity_reward,
    train,
    write_tu_dataset,
)

__all__ = [
    "DatasetSplit",
    "Graph",
    "PredictionSet",
    "RewardBreakdown",
    "Subgraph",
    "aps_score",
    "apply_action",
    "calibrate",
    "compute_reward",
    "generate_ba_shapes",
    "num_classes",
    "parse_tu_dataset",
    "performance_reward",
    "prediction_set",
    "split_folds",
    "sparsity_reward",
    "train",
    "write_tu_dataset",
]
