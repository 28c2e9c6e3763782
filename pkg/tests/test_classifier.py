"""Tests for the classifier and its activation records"""

import numpy as np
import pytest

from self_introspection.config import TrainConfig
from self_introspection.datasets import one_hot
from self_introspection.engine import Activation, NetworkSpec, Params
from self_introspection.errors import ShapeError
from self_introspection.models import (
    NO_CYCLE,
    ActivationRecords,
    ClassifierModel,
    accuracy,
    build_classifier_spec,
    classify,
    half_squared_error,
    predict,
    record_activations,
    train_classifier,
)


@pytest.fixture
def flat_model() -> ClassifierModel:
    spec = build_classifier_spec(4, hidden_layers=2, hidden_units=3)
    return ClassifierModel(spec, Params.zeros(spec, np.float64))


class TestClassifierModel:
    """Architecture checks"""

    def test_needs_ten_sigmoid_outputs(self):
        spec = NetworkSpec.stack([4, 3, 9], output=Activation.SIGMOID)
        with pytest.raises(ShapeError):
            ClassifierModel(spec, Params.zeros(spec))

    def test_output_must_be_sigmoid(self):
        spec = NetworkSpec.stack([4, 3, 10], output=Activation.LINEAR)
        with pytest.raises(ShapeError):
            ClassifierModel(spec, Params.zeros(spec))

    def test_needs_hidden_layer(self):
        with pytest.raises(ValueError):
            build_classifier_spec(4, hidden_layers=0, hidden_units=3)

    def test_hidden_width(self, flat_model):
        assert flat_model.hidden_widths == [3, 3]
        assert flat_model.n_hidden == 6


class TestInference:
    """Prediction, ties and the per-sample error"""

    def test_ties_go_to_lowest_class(self, flat_model):
        label, y_hat = classify(flat_model, np.ones(4))
        assert label == 0
        assert np.all(y_hat == 0.5)
        labels, _ = predict(flat_model, np.ones((3, 4)))
        assert labels.tolist() == [0, 0, 0]

    def test_classify_rejects_batch(self, flat_model):
        with pytest.raises(ShapeError):
            classify(flat_model, np.ones((2, 4)))

    def test_error_of_flat_output(self, flat_model):
        records = record_activations(flat_model, np.zeros((2, 4)), [3, 7])
        # nine outputs off by 0.5 and one off by 0.5
        assert records.e.tolist() == [1.25, 1.25]

    def test_half_squared_error(self):
        assert half_squared_error([1.0, 0.0], [0.0, 0.0]) == 0.5
        assert half_squared_error(one_hot([2]), one_hot([2])).tolist() == [0.0]

    def test_predict_chunking(self, stack):
        whole, y_whole = predict(stack.classifier, stack.test.inputs)
        chunked, y_chunked = predict(stack.classifier, stack.test.inputs, chunk_size=7)
        assert np.array_equal(whole, chunked)
        assert np.allclose(y_whole, y_chunked)

    def test_accuracy_on_empty_set(self, stack):
        with pytest.raises(ValueError):
            accuracy(stack.classifier, stack.test.subset([]))


class TestActivationRecords:
    """Record columns agree with the network"""

    def test_records_match_forward_pass(self, stack):
        records = stack.test_records
        assert len(records) == len(stack.test)
        assert records.n_hidden == stack.classifier.n_hidden == 24
        assert np.array_equal(records.sample_ids, stack.test.sample_ids)
        for i in (0, 5, 17):
            label, y_hat = classify(stack.classifier, stack.test.inputs[i])
            assert records.predicted[i] == label
            assert np.allclose(records.y_hat[i], y_hat)
        expected = half_squared_error(one_hot(records.y_true), records.y_hat)
        assert np.array_equal(records.e, expected)
        assert np.all(records.cycle == NO_CYCLE)

    def test_single_record(self, stack):
        record = stack.test_records[3]
        assert record.sample_id == int(stack.test.sample_ids[3])
        assert record.cycle is None
        assert record.e >= 0

    def test_threads_give_same_records(self, stack):
        serial = record_activations(stack.classifier, stack.test.inputs, stack.test.labels, chunk_size=16)
        threaded = record_activations(
            stack.classifier, stack.test.inputs, stack.test.labels, workers=4, chunk_size=16
        )
        assert np.array_equal(serial.h, threaded.h)
        assert np.array_equal(serial.e, threaded.e)

    def test_subset_and_concat(self, stack):
        records = stack.test_records
        parts = [records.subset(np.arange(10)), records.subset(np.arange(10, len(records)))]
        joined = ActivationRecords.concat(parts)
        assert np.array_equal(joined.h, records.h)
        assert len(records.for_cycle(None)) == len(records)
        assert len(records.for_cycle(1)) == 0

    def test_column_validation(self):
        with pytest.raises(ShapeError):
            ActivationRecords(
                sample_ids=np.arange(2),
                h=np.zeros((2, 3)),
                y_true=np.zeros(2, np.int64),
                y_hat=np.zeros((2, 10)),
                e=np.zeros(3),
                cycle=np.full(2, NO_CYCLE),
            )

    def test_width_mismatch(self, stack):
        with pytest.raises(ShapeError):
            record_activations(stack.classifier, np.zeros((1, 3)), [0])


class TestTraining:
    """Training the classifier"""

    def test_fits_small_set(self, blob_splits):
        train = blob_splits[0].subset(np.arange(32))
        config = TrainConfig(cycle_length=50, num_cycles=20, lr_max=2e-2, batch_size=32, dropout_keep=1.0)
        model, _ = train_classifier(train, train.subset([]), config, hidden_layers=2, hidden_units=16)
        assert accuracy(model, train) >= 0.9
        assert len(model.history) == 20

    def test_blob_accuracy(self, stack):
        assert accuracy(stack.classifier, stack.test) > 0.8

    def test_reproducible(self, blob_splits, quick_config):
        train, val, _ = blob_splits
        first, _ = train_classifier(train, val, quick_config, hidden_layers=1, hidden_units=8)
        second, _ = train_classifier(train, val, quick_config, hidden_layers=1, hidden_units=8)
        assert first.params.equals(second.params)

    def test_snapshots_and_test_accuracy(self, blob_splits, quick_config):
        train, val, test = blob_splits
        probe = test.subset(np.arange(5))
        model, snapshots = train_classifier(
            train, val, quick_config, hidden_layers=1, hidden_units=8, snapshot_probe=probe, test=test
        )
        assert snapshots is not None
        assert sorted(set(snapshots.cycle.tolist())) == [1, 2, 3]
        assert len(snapshots.for_cycle(2)) == 5
        assert all(entry.test_accuracy is not None for entry in model.history)

    def test_noise_injection_keeps_validation_noiseless(self, blob_splits, quick_config):
        train, val, _ = blob_splits
        model, _ = train_classifier(
            train, val, quick_config, hidden_layers=1, hidden_units=8, input_noise_max=0.3
        )
        assert all(entry.val_error is not None for entry in model.history)
        with pytest.raises(ValueError):
            train_classifier(train, val, quick_config, hidden_layers=1, input_noise_max=-1.0)

    def test_dropout_from_config(self, blob_splits, quick_config):
        train, val, _ = blob_splits
        config = quick_config.model_copy(update={"dropout_keep": 0.8})
        model, _ = train_classifier(train, val, config, hidden_layers=1, hidden_units=8)
        assert model.spec.dropout_keep == 0.8
