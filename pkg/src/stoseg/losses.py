"""Training losses, SGD with momentum, and the training loop.

Both losses take post-softmax probabilities and return ``(loss, grad)``
with the gradient taken with respect to those probabilities; the caller
chains it through the softmax backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import network
from .data import Sample, augment as augment_sample, mask_to_onehot
from .rng import SplitMix64, derive_seed

DICE_EPS = 1e-5
CE_EPS = 1e-12

_TRAIN_TAG = 0x7121


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss value appears during training."""


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 8
    loss: str = "dice"
    augment: bool = True
    shuffle_seed: int = 0
    class_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss not in ("dice", "weighted_ce"):
            raise ValueError(f"unknown loss {self.loss!r}")


def _check_probs_target(probs, target):
    probs = np.asarray(probs)
    target = np.asarray(target)
    if probs.shape != target.shape:
        raise ValueError(f"probs shape {probs.shape} != target shape {target.shape}")
    if probs.ndim not in (3, 4):
        raise ValueError(f"expected (c, h, w) or (n, c, h, w), got ndim {probs.ndim}")
    return probs, target


def dice_loss(probs: np.ndarray, target: np.ndarray):
    """Soft dice loss, macro-averaged over the two classes.

    L = 1 - mean_c (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps), eps = 1e-5.
    Accepts one map (c, h, w) or a batch (n, c, h, w); batches average the
    per-sample losses. Returns (loss, dL/dprobs).
    """
    probs, target = _check_probs_target(probs, target)
    squeeze = probs.ndim == 3
    if squeeze:
        probs, target = probs[None], target[None]
    n, c = probs.shape[0], probs.shape[1]
    inter = (probs * target).sum(axis=(2, 3))  # (n, c)
    psum = probs.sum(axis=(2, 3))
    gsum = target.sum(axis=(2, 3))
    num = 2.0 * inter + DICE_EPS
    den = psum + gsum + DICE_EPS
    loss = float(np.mean(1.0 - (num / den).mean(axis=1)))
    scale = 1.0 / (n * c)
    grad = -scale * (2.0 * target * den[:, :, None, None] - num[:, :, None, None]) \
        / (den * den)[:, :, None, None]
    grad = grad.astype(probs.dtype, copy=False)
    return loss, (grad[0] if squeeze else grad)


def weighted_ce(probs: np.ndarray, target: np.ndarray, class_weights):
    """Per-pixel cross entropy with one positive weight per class."""
    probs, target = _check_probs_target(probs, target)
    squeeze = probs.ndim == 3
    if squeeze:
        probs, target = probs[None], target[None]
    w = np.asarray(class_weights, dtype=np.float64)
    if w.shape != (probs.shape[1],):
        raise ValueError(
            f"need {probs.shape[1]} class weights, got shape {w.shape}"
        )
    if np.any(w <= 0):
        raise ValueError(f"class weights must be positive, got {class_weights}")
    n, _, h, wd = probs.shape
    wb = w.reshape(1, -1, 1, 1).astype(probs.dtype)
    scale = 1.0 / (n * h * wd)
    loss = float(-(wb * target * np.log(probs + CE_EPS)).sum() * scale)
    grad = (-(wb * target) / (probs + CE_EPS) * scale).astype(probs.dtype, copy=False)
    return loss, (grad[0] if squeeze else grad)


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float,
    velocity: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """One in-place SGD update: v <- momentum*v + g; p <- p - lr*v."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param {name} shape {p.shape}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
            velocity[name] = v
        v *= momentum
        v += g.astype(p.dtype, copy=False)
        p -= lr * v
    return params


def _batch_arrays(samples, idxs, dtype, aug_seeds=None):
    images, targets = [], []
    for j in idxs:
        s = samples[j]
        if aug_seeds is not None:
            s = augment_sample(s, aug_seeds[j])
        images.append(s.image.astype(dtype, copy=False))
        targets.append(mask_to_onehot(s.mask).astype(dtype, copy=False))
    return np.stack(images), np.stack(targets)


def train_model(model, train_set: Sequence[Sample], config: TrainConfig):
    """SGD training, fully determined by (model, data, config).

    Per epoch: a fresh stream derived from the shuffle seed orders the
    samples and (when enabled) seeds per-sample augmentation; minibatches
    of ``batch_size`` follow that order, keeping the last short batch.
    Returns ``(model, history)`` with one mean sample loss per epoch.
    """
    samples = list(train_set)
    if not samples:
        raise ValueError("training set is empty")
    size = model.config.input_size
    for s in samples:
        if s.image.shape != (3, size, size):
            raise ValueError(
                f"sample {s.ident!r} has shape {s.image.shape}, expected (3, {size}, {size})"
            )
    n = len(samples)
    params = model.parameters()
    velocity: dict[str, np.ndarray] = {}
    seed_stream = SplitMix64(derive_seed(config.shuffle_seed, _TRAIN_TAG))
    history: list[float] = []

    for epoch in range(config.epochs):
        erng = SplitMix64(seed_stream.next_u64())
        order = list(range(n))
        erng.shuffle(order)
        aug_seeds = [erng.next_u64() for _ in range(n)] if config.augment else None
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idxs = order[start : start + config.batch_size]
            images, targets = _batch_arrays(samples, idxs, model.dtype, aug_seeds)
            probs, cache = network.forward(model, images)
            if config.loss == "dice":
                loss, dprobs = dice_loss(probs, targets)
            else:
                loss, dprobs = weighted_ce(probs, targets, config.class_weights)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch {b}"
                )
            grads = network.backward(model, cache, dprobs)
            sgd_step(params, grads, config.learning_rate, config.momentum, velocity)
            total += loss * len(idxs)
        history.append(total / n)
    return model, history
