"""Toeplitz and global attention for skin-strata sequence labeling."""

from ._strata import (
    Checkpoint,
    StrataError,
    benchmark_attention,
    build_attention_map,
    confusion_matrix,
    count_impossible,
    generate_dataset,
    gradcheck,
    kernel_weights,
    load_dataset,
    metrics,
    save_dataset,
    toeplitz_attention,
    train,
)

CLASSES = ("epidermis", "DEJ", "dermis")

__all__ = [
    "CLASSES",
    "Checkpoint",
    "StrataError",
    "benchmark_attention",
    "build_attention_map",
    "confusion_matrix",
    "count_impossible",
    "generate_dataset",
    "gradcheck",
    "kernel_weights",
    "load_dataset",
    "metrics",
    "save_dataset",
    "toeplitz_attention",
    "train",
]
