"""
Generic training loop shared by the classifier, autoencoder and estimator.

Minibatch Adam with a triangular cyclic learning rate. Validation runs at the
end of every cycle; training stops after `patience` consecutive cycle-end
increases of the validation error, and the parameters with the lowest
validation error are returned.
"""

import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..errors import NumericOverflowError, TrainingDivergedError
from .network import Params
from .optim import AdamState, adam_step, clr_lr

logger = logging.getLogger(__name__)

# (params, batch indices, generator) -> (loss, gradients)
LossAndGrads = Callable[[Params, np.ndarray, np.random.Generator], tuple[float, Params]]


@dataclass
class CycleRecord:
    cycle: int
    train_loss: float  # mean minibatch loss over the cycle
    val_loss: float | None
    lr_max: float


@dataclass
class FitResult:
    params: Params
    history: list[CycleRecord] = field(default_factory=list)
    stopped_early: bool = False
    best_cycle: int | None = None


def batch_indices(n_samples: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of minibatches, reshuffled every epoch."""
    if n_samples < 1:
        raise ValueError("Cannot train on an empty set")
    while True:
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            yield order[start : start + batch_size]


def fit(
    params: Params,
    config: TrainConfig,
    n_samples: int,
    loss_and_grads: LossAndGrads,
    validate: Callable[[Params], float] | None = None,
    on_cycle_end: Callable[[int, Params], None] | None = None,
    name: str = "model",
) -> FitResult:
    """Run up to `config.num_cycles` CLR cycles over `n_samples` training samples."""
    rng = np.random.default_rng(config.seed)
    batches = batch_indices(n_samples, config.batch_size, rng)
    state = AdamState.zeros_like(params)
    result = FitResult(params=params)

    best_params: Params | None = None
    best_val = math.inf
    previous_val: float | None = None
    rising = 0

    logger.info(
        f"Training {name}: {config.num_cycles} cycles x {config.cycle_length} iterations, "
        f"batch {config.batch_size}, lr in [{config.lr_min:g}, {config.lr_max:g}]"
    )
    for cycle in range(config.num_cycles):
        lr_max = config.lr_max * config.lr_max_decay**cycle
        lr_min = min(config.lr_min, lr_max)
        total = 0.0
        for step in range(config.cycle_length):
            iteration = cycle * config.cycle_length + step
            lr = clr_lr(iteration, config.cycle_length, lr_min, lr_max)
            idx = next(batches)
            try:
                loss, grads = loss_and_grads(params, idx, rng)
            except NumericOverflowError as e:
                raise TrainingDivergedError(
                    f"{name} diverged at cycle {cycle + 1}, iteration {step}: {e}", params=params
                ) from e
            if not math.isfinite(loss) or not grads.is_finite():
                raise TrainingDivergedError(
                    f"{name} diverged at cycle {cycle + 1}, iteration {step}: loss={loss}",
                    params=params,
                )
            params, state = adam_step(
                params, grads, state, lr, config.beta1, config.beta2, config.eps_hat
            )
            total += loss

        train_loss = total / config.cycle_length
        val_loss = validate(params) if validate is not None else None
        result.history.append(CycleRecord(cycle + 1, train_loss, val_loss, lr_max))
        val_text = f"{val_loss:.6f}" if val_loss is not None else "n/a"
        logger.info(
            f"{name} cycle {cycle + 1}/{config.num_cycles}: "
            f"E_T={train_loss:.6f} E_V={val_text} lr_max={lr_max:g}"
        )
        if on_cycle_end is not None:
            on_cycle_end(cycle + 1, params)

        if val_loss is None:
            continue
        if val_loss < best_val:
            best_val = val_loss
            best_params = params
            result.best_cycle = cycle + 1
        rising = rising + 1 if previous_val is not None and val_loss > previous_val else 0
        previous_val = val_loss
        if rising >= config.patience:
            logger.info(
                f"{name}: validation error rose for {rising} consecutive cycles, stopping"
            )
            result.stopped_early = True
            break

    result.params = best_params if best_params is not None else params
    return result
