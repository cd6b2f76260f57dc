"""Training-dynamics label-noise detection with gradient-boosted trees."""

from ._dyncart import (
    Dataset,
    DyncartError,
    Ensemble,
    auto_valley_threshold,
    compute_dynamics,
    default_detection_config,
    detection_score,
    fit,
    gen_binary_synthetic,
    gen_multiclass_synthetic,
    inject_ncar,
    inject_nnar,
    learn_weights,
    load_dataset,
    pr_auc,
    run_experiment,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DyncartError",
    "Ensemble",
    "auto_valley_threshold",
    "compute_dynamics",
    "default_detection_config",
    "detection_score",
    "fit",
    "gen_binary_synthetic",
    "gen_multiclass_synthetic",
    "inject_ncar",
    "inject_nnar",
    "learn_weights",
    "load_dataset",
    "pr_auc",
    "run_experiment",
    "save_dataset",
]
