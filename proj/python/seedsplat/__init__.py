"""Seed-based dynamic gaussian splatting: train, render and evaluate
time-varying gaussian scenes on the CPU."""

from ._core import (  # noqa: F401
    Camera,
    Checkpoint,
    DataError,
    EvalRow,
    FrameDataset,
    HashFieldConfig,
    MetricsRow,
    NumericError,
    SyntheticConfig,
    TrainConfig,
    TrainOutput,
    evaluate,
    format_metrics,
    gen_synthetic,
    init_model,
    load_checkpoint,
    load_dataset,
    psnr,
    read_png,
    render,
    save_checkpoint,
    train,
    write_png,
)

__all__ = [
    "Camera",
    "Checkpoint",
    "DataError",
    "EvalRow",
    "FrameDataset",
    "HashFieldConfig",
    "MetricsRow",
    "NumericError",
    "SyntheticConfig",
    "TrainConfig",
    "TrainOutput",
    "evaluate",
    "format_metrics",
    "gen_synthetic",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "psnr",
    "read_png",
    "render",
    "save_checkpoint",
    "train",
    "write_png",
]
