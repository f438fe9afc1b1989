"""SGD with momentum and patience-based early stopping."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np


@dataclass
class TrainHyper:
    lr: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 32
    patience: int = 2
    max_epochs: int = 100
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHyper":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


class SGD:
    """Classical momentum: ``v = mu*v + g; p -= lr*v`` (the torch convention)."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, momentum: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        for name, g in grads.items():
            v = self.velocity[name]
            v *= self.momentum
            v += g
            self.params[name] -= self.lr * v


class EarlyStopping:
    """Stop after ``patience`` epochs without a new best validation loss."""

    def __init__(self, patience: int = 2):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float, state) -> bool:
        """Record an epoch; returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.best_state = copy.deepcopy(state)
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


class DivergenceError(RuntimeError):
    pass


def check_finite(loss: float, where: str, epoch: Optional[int] = None):
    if not np.isfinite(loss):
        at = f" at epoch {epoch}" if epoch is not None else ""
        raise DivergenceError(f"{where}: loss became non-finite{at}; lower the learning rate")


def batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]
