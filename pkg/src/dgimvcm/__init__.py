"""Deep graph clustering of multi-view data with missing views."""
from ._kernels import BACKEND
from .config import TrainConfig
from .dataset import (
    MultiViewDataset,
    load_dataset,
    make_gaussian_blobs,
    normalize_views,
    save_dataset,
    simulate_missing,
)
from .metrics import accuracy, ari, evaluate, nmi
from .trainer import TrainState, train

__all__ = [
    "BACKEND",
    "MultiViewDataset",
    "TrainConfig",
    "TrainState",
    "accuracy",
    "ari",
    "evaluate",
    "load_dataset",
    "make_gaussian_blobs",
    "nmi",
    "normalize_views",
    "save_dataset",
    "simulate_missing",
    "train",
]

__version__ = "0.1.0"
