"""Differentiable value-iteration planner with cross-domain transfer."""

from ._core import (
    Dataset,
    PlannerModel,
    TvinModel,
    VinModel,
    evaluate,
    expert_metrics,
    generate_dataset,
    gradient_check,
    load_dataset,
    load_model,
    rollout,
    train_tvin,
    train_vin,
    train_vin_init,
)

__all__ = [
    "Dataset",
    "PlannerModel",
    "TvinModel",
    "VinModel",
    "evaluate",
    "expert_metrics",
    "generate_dataset",
    "gradient_check",
    "load_dataset",
    "load_model",
    "rollout",
    "train_tvin",
    "train_vin",
    "train_vin_init",
]
