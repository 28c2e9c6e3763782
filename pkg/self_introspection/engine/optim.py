"""Adam and the triangular cyclic learning rate."""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .network import Params


@dataclass
class AdamState:
    """First/second moment estimates shaped like the parameters, plus the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(
            [np.zeros_like(a) for a in params.arrays()],
            [np.zeros_like(a) for a in params.arrays()],
            0,
        )


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Returns new params and state; inputs are not mutated."""
    param_arrays, grad_arrays = params.arrays(), grads.arrays()
    if len(param_arrays) != len(grad_arrays) or len(param_arrays) != len(state.m):
        raise ShapeError("Params, gradients and optimizer state disagree on layer count")

    t = state.t + 1
    correction1 = 1.0 - beta1**t
    correction2 = 1.0 - beta2**t
    updated, first, second = [], [], []
    for p, g, m, v in zip(param_arrays, grad_arrays, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"Gradient shape {g.shape} does not match parameter {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        updated.append((p - lr * m_hat / (np.sqrt(v_hat) + eps_hat)).astype(p.dtype))
        first.append(m)
        second.append(v)
    return Params.from_arrays(updated), AdamState(first, second, t)


def clr_lr(iteration: int, cycle_length: int, lr_min: float, lr_max: float) -> float:
    """
    Triangular cyclic learning rate with period T = cycle_length.

    Rises linearly from lr_min to lr_max over the first half of each cycle and
    falls back over the second half.
    """
    if cycle_length < 2:
        raise ValueError(f"Cycle length must be at least 2, got {cycle_length}")
    phase = (iteration % cycle_length) / cycle_length
    rise = 2.0 * phase if phase <= 0.5 else 2.0 * (1.0 - phase)
    return lr_min + (lr_max - lr_min) * rise
