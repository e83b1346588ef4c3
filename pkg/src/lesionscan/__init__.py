"""Facial skin-lesion patch classification pipeline.

A small CNN binary classifier over 50x50 RGB skin patches, trained by
hand-written backpropagation, plus everything around it: dataset loading
and synthesis, confusion/ROC/k-fold evaluation, a sliding-window face
scanner, a CLI, and an HTTP annotation backend.
"""

from .dataset import (
    FoldAssignment,
    PatchDataset,
    PatchSample,
    SplitSpec,
    kfold,
    load_dataset,
    split,
    synth_face,
    synth_patches,
)
from .errors import (
    ConfigError,
    DatasetError,
    DivergenceError,
    ModelFormatError,
    ShapeError,
)
from .metrics import (
    ConfusionCounts,
    CrossValReport,
    MetricReport,
    RocCurve,
    confusion,
    cross_validate,
    report,
    roc,
)
from .network import (
    NetworkSpec,
    NetworkState,
    build_disordernet,
    forward,
    load_model,
    predict,
    save_model,
)
from .scanner import Detection, Roi, ScanConfig, ScanResult, mark, scan, windows
from .training import MomentumState, TrainConfig, TrainHistory, bce_loss, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConfusionCounts",
    "CrossValReport",
    "DatasetError",
    "Detection",
    "DivergenceError",
    "FoldAssignment",
    "MetricReport",
    "ModelFormatError",
    "MomentumState",
    "NetworkSpec",
    "NetworkState",
    "PatchDataset",
    "PatchSample",
    "Roi",
    "RocCurve",
    "ScanConfig",
    "ScanResult",
    "ShapeError",
    "SplitSpec",
    "TrainConfig",
    "TrainHistory",
    "bce_loss",
    "build_disordernet",
    "confusion",
    "cross_validate",
    "forward",
    "kfold",
    "load_dataset",
    "load_model",
    "mark",
    "predict",
    "report",
    "roc",
    "save_model",
    "scan",
    "sgd_step",
    "split",
    "synth_face",
    "synth_patches",
    "train",
    "windows",
]
