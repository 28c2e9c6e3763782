"""The three networks: classifier, activation autoencoder and error estimator."""

from .classifier import (
    NO_CYCLE,
    ActivationRecord,
    ActivationRecords,
    ClassifierModel,
    HistoryEntry,
    accuracy,
    build_classifier_spec,
    classify,
    half_squared_error,
    mean_error,
    predict,
    record_activations,
    train_classifier,
)
from .introspector import (
    LATENT_DIM,
    AutoencoderModel,
    EstimatorModel,
    Introspection,
    LatentPoint,
    build_autoencoder_specs,
    build_estimator_spec,
    confidence,
    decode,
    destandardize,
    encode,
    encode_batch,
    encode_standardized,
    error_targets,
    estimate_batch,
    estimate_error,
    fit_standardization,
    introspect,
    latent_mmd,
    mmd_sq,
    mmd_sq_grad,
    reconstruct,
    reconstruction_error,
    standardize,
    train_autoencoder,
    train_estimator,
)

__all__ = [
    "LATENT_DIM",
    "NO_CYCLE",
    "ActivationRecord",
    "ActivationRecords",
    "AutoencoderModel",
    "ClassifierModel",
    "EstimatorModel",
    "HistoryEntry",
    "Introspection",
    "LatentPoint",
    "accuracy",
    "build_autoencoder_specs",
    "build_classifier_spec",
    "build_estimator_spec",
    "classify",
    "confidence",
    "decode",
    "destandardize",
    "encode",
    "encode_batch",
    "encode_standardized",
    "error_targets",
    "estimate_batch",
    "estimate_error",
    "fit_standardization",
    "half_squared_error",
    "introspect",
    "latent_mmd",
    "mean_error",
    "mmd_sq",
    "mmd_sq_grad",
    "predict",
    "reconstruct",
    "reconstruction_error",
    "record_activations",
    "standardize",
    "train_autoencoder",
    "train_classifier",
    "train_estimator",
]
