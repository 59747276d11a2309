from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import loss_and_grad
from .optim import SGDState, opt_step
from .params import ParamSet


class NumericError(FloatingPointError):
    """A loss or gradient went NaN/Inf during training."""


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 4

    def __post_init__(self):
        if self.lr < 0 or not 0 <= self.momentum < 1:
            raise ValueError("lr must be >= 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def train_epoch(params: ParamSet, split, mask, state: SGDState, hyper: TrainHyper,
                rng: np.random.Generator) -> float:
    """One shuffled pass over ``split``; returns the mean minibatch loss."""
    order = rng.permutation(len(split))
    losses = []
    for start in range(0, len(order), hyper.batch_size):
        batch = split.subset(order[start:start + hyper.batch_size])
        value, grads = loss_and_grad(params, batch)
        if not np.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
            raise NumericError(f"non-finite loss or gradient at optimizer step {state.steps}")
        opt_step(params, grads, mask, state, hyper.lr, hyper.momentum)
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0
