"""Weakly supervised face-name alignment."""

from ._secla import (
    ContractError,
    Dataset,
    Model,
    NumericError,
    ShapeError,
    TrainConfig,
    ValidationError,
    agreement_loss,
    align_pair,
    contrastive_fn,
    contrastive_nf,
    dense_similarity,
    evaluate,
    gradcheck,
    load_dataset,
    load_model,
    precision_recall_f1,
    synth,
    train,
)

__all__ = [
    "ContractError",
    "Dataset",
    "Model",
    "NumericError",
    "ShapeError",
    "TrainConfig",
    "ValidationError",
    "agreement_loss",
    "align_pair",
    "contrastive_fn",
    "contrastive_nf",
    "dense_similarity",
    "evaluate",
    "gradcheck",
    "load_dataset",
    "load_model",
    "precision_recall_f1",
    "synth",
    "train",
]
