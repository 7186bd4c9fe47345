"""Whole-sequence BPTT training with Adam and global gradient-norm rescaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import CompiledNetwork
from .genome import Genome, copy_genome, validate_genome


class TrainingError(RuntimeError):
    """Training diverged or was handed an invalid split."""


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    clip_low: float = 0.05
    clip_high: float = 1.0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.clip_low < self.clip_high):
            raise ValueError("need 0 < clip_low < clip_high")


def gradient_rescale(gradient: np.ndarray, clip_low: float,
                     clip_high: float) -> np.ndarray:
    """Rescale the whole gradient so its L2 norm lands inside [clip_low, clip_high].

    Norms above clip_high are scaled down, nonzero norms below clip_low are
    boosted up, in-band (and exactly zero) gradients pass through unchanged.
    """
    if not (0 < clip_low < clip_high):
        raise ValueError("need 0 < clip_low < clip_high")
    norm = float(np.linalg.norm(gradient))
    if norm > clip_high:
        return gradient * (clip_high / norm)
    if 0.0 < norm < clip_low:
        return gradient * (clip_low / norm)
    return gradient.copy()


def bptt_train(genome: Genome, inputs: np.ndarray, targets: np.ndarray,
               config: TrainConfig) -> tuple[Genome, list[float]]:
    """Train a genome by full-unroll BPTT; returns (trained copy, loss trace).

    One epoch = one forward/backward pass over the whole sequence followed by
    a single Adam step on the rescaled gradient.  The trace holds the loss
    measured at the start of each epoch (before that epoch's update).
    """
    config.validate()
    validate_genome(genome)
    X = np.ascontiguousarray(inputs, dtype=np.float64)
    y = np.ascontiguousarray(targets, dtype=np.float64)
    if y.shape[0] < 2:
        raise TrainingError("training split needs at least 2 target-bearing rows")
    if y.shape[0] > X.shape[0]:
        raise TrainingError("more targets than input rows")

    net = CompiledNetwork(genome)
    w = net.initial_weights.copy()
    if config.epochs == 0:
        return copy_genome(genome), []

    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2 = config.adam_beta1, config.adam_beta2
    eps = config.adam_epsilon
    trace: list[float] = []
    for epoch in range(config.epochs):
        loss, grad = net.loss_and_gradient(w, X, y)
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at epoch {epoch} (weights diverged)"
            )
        trace.append(loss)
        grad = gradient_rescale(grad, config.clip_low, config.clip_high)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        step = epoch + 1
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    trained = net.writeback(genome, w)
    trained.fitness = None
    return trained, trace


def evaluate(genome: Genome, inputs: np.ndarray, targets: np.ndarray,
             set_fitness: bool = False) -> float:
    """MSE of the genome's predictions against targets over one split.

    The network starts from zero state at the first row of the split.  With
    ``set_fitness`` the result is recorded as the genome's fitness (used when
    the split is the validation split).
    """
    X = np.ascontiguousarray(inputs, dtype=np.float64)
    y = np.ascontiguousarray(targets, dtype=np.float64)
    if y.shape[0] == 0 or X.shape[0] == 0:
        raise ValueError("evaluate: empty split")
    net = CompiledNetwork(genome)
    preds = net.forward(net.initial_weights, X)
    resid = preds[: y.shape[0]] - y
    mse = float(np.mean(resid * resid))
    if set_fitness:
        genome.fitness = mse
    return mse
