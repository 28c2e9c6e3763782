"""Pytest configuration and fixtures shared by the test modules"""

import logging
import os
from dataclasses import dataclass

import numpy as np
import pytest

from self_introspection.config import SplitSpec, TrainConfig
from self_introspection.datasets import Dataset, split
from self_introspection.models import (
    ActivationRecords,
    AutoencoderModel,
    ClassifierModel,
    EstimatorModel,
    record_activations,
    train_autoencoder,
    train_classifier,
    train_estimator,
)

logger = logging.getLogger(__name__)

WIDTH = 16


def make_blobs(n_per_class: int = 60, width: int = WIDTH, noise: float = 0.08, seed: int = 0) -> Dataset:
    """Ten well separated prototypes in [0, 1]^width plus Gaussian jitter."""
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(0.0, 1.0, size=(10, width))
    labels = np.repeat(np.arange(10), n_per_class)
    inputs = prototypes[labels] + rng.normal(0.0, noise, size=(labels.shape[0], width))
    order = rng.permutation(labels.shape[0])
    return Dataset(inputs[order].astype(np.float32), labels[order])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def blobs() -> Dataset:
    return make_blobs()


@pytest.fixture(scope="session")
def blob_splits(blobs) -> tuple[Dataset, Dataset, Dataset]:
    return split(blobs, SplitSpec(train_count=400, val_count=100, test_count=100, seed=3))


@pytest.fixture
def quick_config() -> TrainConfig:
    return TrainConfig(
        cycle_length=40,
        num_cycles=3,
        lr_min=0.0,
        lr_max=1e-2,
        batch_size=32,
        patience=5,
        dropout_keep=1.0,
        seed=0,
    )


@dataclass
class Stack:
    train: Dataset
    val: Dataset
    test: Dataset
    classifier: ClassifierModel
    records: ActivationRecords
    val_records: ActivationRecords
    test_records: ActivationRecords
    autoencoder: AutoencoderModel
    estimator: EstimatorModel


@pytest.fixture(scope="session")
def stack(blob_splits) -> Stack:
    """A small classifier, autoencoder and estimator trained on the blob data."""
    train, val, test = blob_splits
    classifier_config = TrainConfig(
        cycle_length=100, num_cycles=8, lr_max=2e-2, batch_size=32, dropout_keep=1.0, seed=1
    )
    classifier, _ = train_classifier(
        train, val, classifier_config, hidden_layers=2, hidden_units=12
    )
    records = record_activations(classifier, train.inputs, train.labels, train.sample_ids)
    val_records = record_activations(classifier, val.inputs, val.labels, val.sample_ids)
    test_records = record_activations(classifier, test.inputs, test.labels, test.sample_ids)
    autoencoder = train_autoencoder(
        records,
        TrainConfig(cycle_length=50, num_cycles=6, lr_max=5e-3, batch_size=64, dropout_keep=1.0, seed=2),
        hidden_units=[24, 24],
        val=val_records,
    )
    estimator = train_estimator(
        autoencoder,
        records,
        TrainConfig(cycle_length=50, num_cycles=4, lr_max=5e-3, batch_size=32, dropout_keep=1.0, seed=3),
        hidden_units=[16, 16],
    )
    return Stack(
        train, val, test, classifier, records, val_records, test_records, autoencoder, estimator
    )


def pytest_collection_modifyitems(config, items):
    """Skip tests that need the real MNIST files when SINT_MNIST_DIR is not set"""
    mnist_dir = os.getenv("SINT_MNIST_DIR", "")
    if not mnist_dir:
        skip_mnist = pytest.mark.skip(reason="SINT_MNIST_DIR environment variable not set")
        for item in items:
            if "mnist" in item.keywords:
                item.add_marker(skip_mnist)
