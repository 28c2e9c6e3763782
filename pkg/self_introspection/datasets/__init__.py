"""MNIST ingestion, splits, input noise and point-cloud diagnostics."""

from .dataset import N_CLASSES, Dataset, one_hot
from .download import MNIST_FILES, MnistDownloader, download_mnist
from .idx import load_idx, write_idx
from .splits import (
    add_awgn,
    hausdorff_distance,
    prepare_splits,
    representativeness,
    split,
    split_indices,
)

__all__ = [
    "MNIST_FILES",
    "N_CLASSES",
    "Dataset",
    "MnistDownloader",
    "add_awgn",
    "download_mnist",
    "hausdorff_distance",
    "load_idx",
    "one_hot",
    "prepare_splits",
    "representativeness",
    "split",
    "split_indices",
    "write_idx",
]
