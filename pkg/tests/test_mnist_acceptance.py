"""
Acceptance checks on the real MNIST files with the desk preset.

Needs SINT_MNIST_DIR pointing at the four IDX archives (see `self-introspect fetch`).
Run with: pytest -m mnist
"""

import os

import numpy as np
import pytest

from self_introspection.analysis import (
    apply_permutation,
    attack_campaign,
    expected_latent,
    latent_separation,
    nearest_neighbor_agreement,
    noise_accuracy_curve,
    violin_report,
)
from self_introspection.cli import Workspace, run
from self_introspection.config import load_run_config
from self_introspection.datasets import prepare_splits
from self_introspection.models import accuracy, encode_batch, latent_mmd, predict, train_autoencoder

pytestmark = [pytest.mark.mnist, pytest.mark.slow, pytest.mark.timeout(7200)]


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    output_dir = tmp_path_factory.mktemp("runs")
    config = load_run_config(
        preset="desk",
        overrides={
            "seed": 1,
            "output_dir": str(output_dir),
            "data": {"directory": os.environ["SINT_MNIST_DIR"]},
        },
    )
    for command in ("train", "autoencode", "estimate", "atlas", "reorder"):
        assert run(command, config) == 0, command
    ws = Workspace(output_dir)
    _, _, test = prepare_splits(config.seeded())
    return config, ws, test


def test_desk_accuracy(desk_run):
    _, ws, test = desk_run
    assert accuracy(ws.load("classifier"), test) >= 0.92


def test_reordered_classifier_agrees(desk_run):
    _, ws, test = desk_run
    inputs = test.inputs[:1000]
    labels, y_hat = predict(ws.load("classifier"), inputs)
    sorted_labels, sorted_y_hat = predict(ws.load("classifier_sorted"), inputs)
    assert np.array_equal(labels, sorted_labels)
    assert np.max(np.abs(y_hat - sorted_y_hat)) < 1e-5


def test_reorder_matches_patterns(desk_run):
    _, ws, _ = desk_run
    reordered = apply_permutation(ws.load("classifier"), ws.load("patterns").assignment)
    assert reordered.params.equals(ws.load("classifier_sorted").params)


def test_latent_separation(desk_run):
    _, ws, _ = desk_run
    vae = ws.load("autoencoder")
    train, test = ws.load("records_train"), ws.load("records_test")
    z_test = encode_batch(vae, test.h)
    within, between = latent_separation(z_test, test.y_true)
    assert within < between
    agreement = nearest_neighbor_agreement(encode_batch(vae, train.h), train.y_true, z_test, test.y_true)
    assert agreement >= 0.8


def test_expected_latent_matches_class_mean(desk_run):
    _, ws, _ = desk_run
    vae = ws.load("autoencoder")
    train = ws.load("records_train")
    latents = encode_batch(vae, train.h).astype(np.float64)
    for density in ws.load("patterns").densities:
        mean = latents[train.y_true == density.label].mean(axis=0)
        assert np.linalg.norm(np.array(expected_latent(density)) - mean) <= 0.1


def test_error_estimate_separation(desk_run):
    _, ws, test = desk_run
    report = violin_report(ws.load("classifier"), ws.load("autoencoder"), ws.load("estimator"), test)
    assert report.median_gap() >= 1.0


def test_fgsm_success_is_partial(desk_run):
    config, ws, test = desk_run
    campaign = attack_campaign(
        ws.load("classifier"), ws.load("autoencoder"), test, 20, 0.01, 100, np.random.default_rng(config.seed)
    )
    assert len(campaign.trajectories) == 180
    assert 0.0 < campaign.success_fraction < 1.0


def test_training_reduces_latent_mmd(desk_run):
    config, ws, _ = desk_run
    records = ws.load("records_train")
    val = ws.load("records_val")
    seeded = config.seeded()
    untrained = train_autoencoder(
        records,
        seeded.autoencoder.model_copy(update={"lr_max": 0.0, "cycle_length": 2, "num_cycles": 1}),
        mmd_weight=seeded.mmd_weight,
        kernel_bandwidth_sq=seeded.kernel_bandwidth_sq,
        hidden_units=seeded.introspector_units,
    )
    trained = ws.load("autoencoder")
    before = latent_mmd(untrained, val.h, 4096, np.random.default_rng(0))
    after = latent_mmd(trained, val.h, 4096, np.random.default_rng(0))
    assert after < before


def test_noise_injection_improves_robustness(desk_run):
    config, ws, test = desk_run
    assert run("train", config, tag="noisy", noise_inject=config.experiments.noise_sigma_max) == 0
    clean = noise_accuracy_curve(ws.load("classifier"), test, [0.5], np.random.default_rng(5))
    noisy = noise_accuracy_curve(
        Workspace(ws.root, "noisy").load("classifier"), test, [0.5], np.random.default_rng(5)
    )
    assert noisy[0, 1] - clean[0, 1] >= 0.10
