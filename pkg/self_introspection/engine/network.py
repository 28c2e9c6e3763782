"""
Dense feedforward networks with hand-written reverse-mode differentiation.

A network is described by a NetworkSpec (a pydantic model, so it can be
written into model containers verbatim) and parameterized by a Params
instance holding one weight matrix and one bias vector per layer.

Inputs may be a single vector or a batch with one sample per row. All
randomness (initialization, dropout masks) comes from explicitly passed
numpy Generators.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, PositiveInt, model_validator
from scipy.special import expit

from ..errors import NumericOverflowError, ShapeError


class Activation(str, Enum):
    ELU = "elu"
    SIGMOID = "sigmoid"
    LINEAR = "linear"


class Mode(str, Enum):
    """Train applies dropout; Eval is deterministic."""

    TRAIN = "train"
    EVAL = "eval"


class LayerSpec(BaseModel):
    input_width: PositiveInt
    output_width: PositiveInt
    activation: Activation


class NetworkSpec(BaseModel):
    layers: list[LayerSpec] = Field(min_length=1)
    # Probability of keeping a hidden unit during training
    dropout_keep: float = Field(default=1.0, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_chain(self) -> "NetworkSpec":
        for i, (layer, following) in enumerate(zip(self.layers, self.layers[1:])):
            if layer.output_width != following.input_width:
                raise ValueError(
                    f"Layer {i} outputs {layer.output_width} units but layer {i + 1} "
                    f"expects {following.input_width}"
                )
        return self

    @classmethod
    def stack(
        cls,
        widths: list[int],
        hidden: Activation = Activation.ELU,
        output: Activation = Activation.LINEAR,
        dropout_keep: float = 1.0,
    ) -> "NetworkSpec":
        """Chain `widths[0] -> widths[1] -> ... -> widths[-1]`."""
        if len(widths) < 2:
            raise ValueError("A network needs an input width and at least one layer width")
        layers = [
            LayerSpec(
                input_width=n_in,
                output_width=n_out,
                activation=output if i == len(widths) - 2 else hidden,
            )
            for i, (n_in, n_out) in enumerate(zip(widths, widths[1:]))
        ]
        return cls(layers=layers, dropout_keep=dropout_keep)

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.output_width for layer in self.layers[:-1]]


@dataclass
class Params:
    """Weights W_k (output_width x input_width) and biases b_k per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initialize(
        cls, spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32
    ) -> "Params":
        """Uniform He-style initialization U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
        weights, biases = [], []
        for layer in spec.layers:
            limit = np.sqrt(6.0 / layer.input_width)
            weights.append(
                rng.uniform(-limit, limit, size=(layer.output_width, layer.input_width)).astype(
                    dtype
                )
            )
            biases.append(np.zeros(layer.output_width, dtype=dtype))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, spec: NetworkSpec, dtype=np.float32) -> "Params":
        return cls(
            [np.zeros((l.output_width, l.input_width), dtype=dtype) for l in spec.layers],
            [np.zeros(l.output_width, dtype=dtype) for l in spec.layers],
        )

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "Params":
        """Inverse of `arrays()`."""
        if len(arrays) % 2:
            raise ShapeError("Expected alternating weight and bias arrays")
        return cls(list(arrays[0::2]), list(arrays[1::2]))

    def arrays(self) -> list[np.ndarray]:
        """Flat list [W_0, b_0, W_1, b_1, ...]."""
        out = []
        for weight, bias in zip(self.weights, self.biases):
            out.extend((weight, bias))
        return out

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def copy(self) -> "Params":
        return Params([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "Params":
        return Params(
            [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases]
        )

    def concat(self, other: "Params") -> "Params":
        """Layers of `self` followed by layers of `other` (one optimizer over two networks)."""
        return Params(self.weights + other.weights, self.biases + other.biases)

    def split(self, n_layers: int) -> tuple["Params", "Params"]:
        return (
            Params(self.weights[:n_layers], self.biases[:n_layers]),
            Params(self.weights[n_layers:], self.biases[n_layers:]),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "Params") -> bool:
        """Exact, element-wise comparison."""
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs)
        )

    def check(self, spec: NetworkSpec) -> None:
        if len(self.weights) != len(spec.layers) or len(self.biases) != len(spec.layers):
            raise ShapeError(
                f"Spec has {len(spec.layers)} layers, params have {len(self.weights)}"
            )
        for i, (layer, weight, bias) in enumerate(zip(spec.layers, self.weights, self.biases)):
            if weight.shape != (layer.output_width, layer.input_width):
                raise ShapeError(f"Layer {i}: weight shape {weight.shape} does not match spec")
            if bias.shape != (layer.output_width,):
                raise ShapeError(f"Layer {i}: bias shape {bias.shape} does not match spec")
        if not self.is_finite():
            raise ShapeError("Params contain non-finite entries")


def elu(x):
    """ELU with alpha = 1: x for x >= 0, exp(x) - 1 otherwise."""
    values = np.asarray(x)
    out = np.where(values >= 0, values, np.expm1(np.minimum(values, 0)))
    return float(out) if out.ndim == 0 else out


def _activate(activation: Activation, z: np.ndarray) -> np.ndarray:
    if activation is Activation.ELU:
        return np.where(z >= 0, z, np.expm1(np.minimum(z, 0)))
    if activation is Activation.SIGMOID:
        return expit(z)
    return z


def _activation_grad(activation: Activation, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if activation is Activation.ELU:
        return np.where(z >= 0, 1, a + 1).astype(z.dtype)
    if activation is Activation.SIGMOID:
        return a * (1 - a)
    return np.ones_like(z)


@dataclass
class ForwardTrace:
    """Everything the reverse pass needs, recorded during one forward pass."""

    inputs: list[np.ndarray]  # input to each layer, after dropout
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]  # post-nonlinearity, pre-dropout
    masks: list[np.ndarray | None]  # scaled dropout mask applied to outputs[i]
    single: bool

    @property
    def output(self) -> np.ndarray:
        return self.outputs[-1]

    @property
    def hidden(self) -> list[np.ndarray]:
        return self.outputs[:-1]


def _as_batch(spec: NetworkSpec, params: Params, x) -> tuple[np.ndarray, bool]:
    array = np.asarray(x, dtype=params.dtype)
    single = array.ndim == 1
    if single:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != spec.input_width:
        raise ShapeError(
            f"Expected input of width {spec.input_width}, got shape {np.shape(x)}"
        )
    return array, single


def trace(
    spec: NetworkSpec,
    params: Params,
    x,
    mode: Mode = Mode.EVAL,
    rng: np.random.Generator | None = None,
    check_finite: bool = False,
) -> ForwardTrace:
    """Forward pass keeping intermediate values for `backprop`."""
    batch, single = _as_batch(spec, params, x)
    keep = spec.dropout_keep
    use_dropout = mode is Mode.TRAIN and keep < 1.0
    if use_dropout and rng is None:
        raise ValueError("Train-mode dropout needs a seeded generator")

    inputs, preacts, outputs, masks = [], [], [], []
    h = batch
    last = len(spec.layers) - 1
    for i, (layer, weight, bias) in enumerate(zip(spec.layers, params.weights, params.biases)):
        z = h @ weight.T + bias
        a = _activate(layer.activation, z)
        if check_finite and not np.all(np.isfinite(a)):
            raise NumericOverflowError(
                f"Non-finite activations in layer {i} ({layer.activation.value})", layer=i
            )
        inputs.append(h)
        preacts.append(z)
        outputs.append(a)
        if i < last and use_dropout:
            mask = (rng.random(a.shape) < keep).astype(a.dtype) / a.dtype.type(keep)
            masks.append(mask)
            h = a * mask
        else:
            masks.append(None)
            h = a
    return ForwardTrace(inputs, preacts, outputs, masks, single)


def forward(
    spec: NetworkSpec,
    params: Params,
    x,
    mode: Mode = Mode.EVAL,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """
    Evaluate the network.

    Returns the output layer value and every hidden activation (post-nonlinearity,
    pre-dropout), with the batch axis dropped when `x` is a single vector.
    """
    result = trace(spec, params, x, mode, rng)
    if result.single:
        return result.output[0], [h[0] for h in result.hidden]
    return result.output, result.hidden


def backprop(
    spec: NetworkSpec, params: Params, result: ForwardTrace, output_grad: np.ndarray
) -> tuple[Params, np.ndarray]:
    """Reverse pass: gradients of the parameters and of the (batched) input."""
    grad = np.asarray(output_grad, dtype=result.output.dtype)
    if grad.shape != result.output.shape:
        raise ShapeError(
            f"Output gradient shape {grad.shape} does not match output {result.output.shape}"
        )
    grad_w: list[np.ndarray] = [None] * len(spec.layers)
    grad_b: list[np.ndarray] = [None] * len(spec.layers)
    for i in reversed(range(len(spec.layers))):
        layer = spec.layers[i]
        dz = grad * _activation_grad(layer.activation, result.preacts[i], result.outputs[i])
        grad_w[i] = dz.T @ result.inputs[i]
        grad_b[i] = dz.sum(axis=0)
        grad = dz @ params.weights[i]
        if i > 0 and result.masks[i - 1] is not None:
            grad = grad * result.masks[i - 1]
    return Params(grad_w, grad_b), grad


def half_mse(
    spec: NetworkSpec,
    params: Params,
    x,
    target,
    mode: Mode = Mode.EVAL,
    rng: np.random.Generator | None = None,
) -> tuple[float, Params]:
    """
    Loss (1/2)||y_hat - y||^2 averaged over the batch, and its parameter gradients.
    """
    result = trace(spec, params, x, mode, rng, check_finite=True)
    target = np.asarray(target, dtype=result.output.dtype)
    if target.ndim == 1:
        target = target[None, :]
    if target.shape != result.output.shape:
        raise ShapeError(
            f"Target shape {target.shape} does not match output {result.output.shape}"
        )
    n = result.output.shape[0]
    diff = result.output - target
    loss = 0.5 * float(np.sum(diff.astype(np.float64) ** 2)) / n
    grads, _ = backprop(spec, params, result, diff / diff.dtype.type(n))
    return loss, grads


def backward(
    spec: NetworkSpec,
    params: Params,
    x,
    target,
    mode: Mode = Mode.EVAL,
    rng: np.random.Generator | None = None,
) -> Params:
    """dE/dθ for E = (1/2)||y_hat - y||^2 (batch mean). Parameters are not mutated."""
    _, grads = half_mse(spec, params, x, target, mode, rng)
    return grads


def input_gradient(spec: NetworkSpec, params: Params, x, output_grad) -> np.ndarray:
    """dE/dx in Eval mode, given dE/dy_hat."""
    result = trace(spec, params, x, Mode.EVAL, check_finite=True)
    output_grad = np.asarray(output_grad)
    if output_grad.ndim == 1:
        output_grad = output_grad[None, :]
    _, grad = backprop(spec, params, result, output_grad)
    return grad[0] if result.single else grad


def hidden_concat(hidden: list[np.ndarray]) -> np.ndarray:
    """Concatenate hidden layers into one activation vector (layer 0 first)."""
    if not hidden:
        raise ValueError("No hidden layers to concatenate")
    for i, layer in enumerate(hidden):
        if np.shape(layer)[-1] == 0:
            raise ValueError(f"Hidden layer {i} is empty")
    return np.concatenate(hidden, axis=-1)
