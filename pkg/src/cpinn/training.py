"""Adam training with an 80/20 batch split, plateau LR reduction and early stopping."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from cpinn.network import Ansatz, NetworkLayout, NetworkParams, init_params
from cpinn.qmc import Batch, BatchPlan, compose_batches
from cpinn.variational import DegenerateAnsatzError, LossConfig, loss, loss_and_gradient

__all__ = [
    "TrainingDivergedError",
    "TrainingConfig",
    "AdamState",
    "adam_step",
    "split_batches",
    "EpochRecord",
    "RunHistory",
    "ValidationMonitor",
    "train",
]

log = logging.getLogger(__name__)
Array = NDArray[np.float64]


class TrainingDivergedError(FloatingPointError):
    """A loss or gradient became non-finite."""


@dataclass(frozen=True)
class TrainingConfig:
    plan: BatchPlan
    epochs_max: int = 100
    initial_lr: float = 1e-3
    gamma: float = 1.0
    lr_factor: float = 0.1
    lr_patience: int = 10
    early_stop_patience: int = 20
    validation_fraction: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    min_delta: float = 1e-4  # relative improvement that counts
    min_lr: float = 1e-7
    grace_epochs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie strictly between 0 and 1")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")
        if self.epochs_max < 1:
            raise ValueError("epochs_max must be positive")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must lie in (0, 1)")
        LossConfig(self.gamma)


@dataclass
class AdamState:
    m: Array
    v: Array
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    state: AdamState,
    params: Array,
    gradient: Array,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, Array]:
    """One bias-corrected Adam update; returns new state and parameters."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.m.shape or np.shape(params) != g.shape:
        raise ValueError("gradient, parameters and optimizer state are misaligned")
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError("non-finite gradient")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return AdamState(m, v, step), params - lr * m_hat / (np.sqrt(v_hat) + eps)


def split_batches(batches: Sequence[Batch], validation_fraction: float, seed: int) -> tuple[list[Batch], list[Batch]]:
    """Assign whole batches to training/validation by a seeded permutation."""
    n = len(batches)
    if n < 5:
        raise ValueError(f"need at least 5 batches to split, got {n}")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie strictly between 0 and 1")
    n_val = min(max(int(round(n * validation_fraction)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    val_idx = set(order[:n_val].tolist())
    train = [b for i, b in enumerate(batches) if i not in val_idx]
    val = [b for i, b in enumerate(batches) if i in val_idx]
    return train, val


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class RunHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: str = ""
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stop_reason": self.stop_reason,
            "wall_time": self.wall_time,
        }


class ValidationMonitor:
    """Plateau and early-stopping rules driven by the validation loss.

    An epoch *improves* when its loss beats the best so far by more than
    ``min_delta`` relative.  After ``lr_patience`` consecutive epochs without
    improvement the learning rate is multiplied by ``factor`` (never below
    ``min_lr``) and the count restarts.  Training stops once more than
    ``stop_patience`` epochs have passed since the last improvement.
    """

    def __init__(
        self,
        lr: float,
        factor: float = 0.1,
        lr_patience: int = 10,
        stop_patience: int = 20,
        min_delta: float = 1e-4,
        min_lr: float = 1e-7,
    ) -> None:
        self.lr = lr
        self.factor = factor
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.min_delta = min_delta
        self.min_lr = min_lr
        self.best = math.inf
        self.best_epoch = 0
        self.last_improvement = 0
        self.wait = 0
        self.reductions: list[int] = []

    def update(self, epoch: int, value: float) -> bool:
        """Feed one epoch's validation loss; returns True when training should stop."""
        if value < self.best - self.min_delta * abs(self.best) or math.isinf(self.best):
            self.last_improvement = epoch
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.lr_patience:
                self.wait = 0
                if self.lr * self.factor >= self.min_lr:
                    self.lr *= self.factor
                    self.reductions.append(epoch)
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
        return epoch - self.last_improvement > self.stop_patience


def _mean_loss(problem, params, batches, gamma, ansatz) -> float:
    total = 0.0
    for b in batches:
        total += loss(problem, params, b, gamma, ansatz=ansatz)
    return total / len(batches)


def train(
    problem,
    layout: NetworkLayout,
    config: TrainingConfig,
    ansatz: Ansatz | None = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[NetworkParams, RunHistory]:
    """Minimize the penalized loss; returns the best-validation parameters and the history.

    One Adam step per training batch, batch order reshuffled every epoch.
    During the first ``grace_epochs`` a numerically vanishing trial function
    is trained on the penalty term alone instead of aborting.
    """
    if layout.spatial_dim != problem.spatial_dim or layout.tag_dim != problem.tag_dim:
        raise ValueError("network layout does not match the problem dimensions")
    ansatz = ansatz or Ansatz.for_problem(problem)
    started = time.perf_counter()
    batches = compose_batches(config.plan, problem)
    train_set, val_set = split_batches(batches, config.validation_fraction, config.seed)
    params = init_params(layout, config.seed)
    state = AdamState.zeros(layout.n_params)
    monitor = ValidationMonitor(
        config.initial_lr,
        config.lr_factor,
        config.lr_patience,
        config.early_stop_patience,
        config.min_delta,
        config.min_lr,
    )
    history = RunHistory()
    best = params.copy()
    stop_reason = "epochs_max"
    for epoch in range(1, config.epochs_max + 1):
        lr = monitor.lr
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
        in_grace = epoch <= config.grace_epochs
        total = 0.0
        for i in order:
            batch = train_set[i]
            try:
                value, grad, _ = loss_and_gradient(problem, params, batch, config.gamma, ansatz=ansatz)
            except DegenerateAnsatzError:
                if not in_grace:
                    raise
                value, grad, _ = loss_and_gradient(
                    problem, params, batch, config.gamma, ansatz=ansatz, penalty_only=True
                )
            if not math.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch}")
            state, flat = adam_step(state, params.flat, grad, lr, config.beta1, config.beta2, config.eps)
            params = NetworkParams(layout, flat)
            total += value
        try:
            val_loss = _mean_loss(problem, params, val_set, config.gamma, ansatz)
        except DegenerateAnsatzError:
            if not in_grace:
                raise
            val_loss = math.inf
        if not math.isfinite(val_loss) and not in_grace:
            raise TrainingDivergedError(f"non-finite validation loss in epoch {epoch}")
        record = EpochRecord(epoch, total / len(train_set), val_loss, lr)
        history.records.append(record)
        if val_loss < monitor.best:
            best = params.copy()
        stop = monitor.update(epoch, val_loss)
        log.info("epoch %d train %.6g val %.6g lr %.1e", epoch, record.train_loss, val_loss, lr)
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            stop_reason = "early_stopping"
            break
    history.best_epoch = monitor.best_epoch
    history.best_val_loss = monitor.best
    history.stop_reason = stop_reason
    history.wall_time = time.perf_counter() - started
    return best, history
