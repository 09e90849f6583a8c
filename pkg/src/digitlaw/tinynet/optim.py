"""Optimizers and the mini-batch training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from digitlaw.tinynet.network import Model, batch_loss_and_grads


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        # lr = 0 is allowed so a no-op optimizer remains expressible.
        if self.lr < 0.0:
            raise ValueError("learning rate must be nonnegative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class SGDMomentum:
    lr: float = 1e-3
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.lr < 0.0:
            raise ValueError("learning rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Adam | SGDMomentum = field(default_factory=Adam)
    epochs: int = 10
    batch_size: int = 64
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    accuracy: float


class _AdamState:
    def __init__(self, opt: Adam):
        self.opt = opt
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def start_step(self) -> None:
        self.t += 1

    def update(self, key, param: np.ndarray, grad: np.ndarray) -> None:
        opt = self.opt
        m = self.m.setdefault(key, np.zeros_like(param))
        v = self.v.setdefault(key, np.zeros_like(param))
        m *= opt.beta1
        m += (1.0 - opt.beta1) * grad
        v *= opt.beta2
        v += (1.0 - opt.beta2) * grad * grad
        m_hat = m / (1.0 - opt.beta1**self.t)
        v_hat = v / (1.0 - opt.beta2**self.t)
        param -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)


class _MomentumState:
    def __init__(self, opt: SGDMomentum):
        self.opt = opt
        self.velocity: dict = {}

    def start_step(self) -> None:
        pass

    def update(self, key, param: np.ndarray, grad: np.ndarray) -> None:
        vel = self.velocity.setdefault(key, np.zeros_like(param))
        vel *= self.opt.momentum
        vel -= self.opt.lr * grad
        param += vel


def train(
    model: Model,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
) -> tuple[Model, list[EpochStats]]:
    """Mini-batch training; mutates and returns ``model`` plus per-epoch stats.

    Shuffling and every update are driven by ``config.rng_seed``, so the same
    seed reproduces the exact parameter trajectory. The reported loss and
    accuracy are averaged over the epoch's pre-update batch evaluations.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim != 4:
        raise ValueError(f"expected a (N, H, W, C) image array, got shape {images.shape}")
    n = images.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if labels.shape != (n,):
        raise ValueError("labels must align with images")
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise ValueError(f"labels must lie in 0..{model.num_classes - 1}")
    if images.shape[1:] != tuple(model.input_shape):
        raise ValueError(f"image shape {images.shape[1:]} does not match model input {model.input_shape}")

    if isinstance(config.optimizer, Adam):
        state: _AdamState | _MomentumState = _AdamState(config.optimizer)
    else:
        state = _MomentumState(config.optimizer)

    rng = np.random.default_rng(config.rng_seed)
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            x = images[batch_idx]
            y = labels[batch_idx]
            mean_loss, batch_correct, grads = batch_loss_and_grads(model, x, y)
            loss_sum += mean_loss * len(batch_idx)
            correct += batch_correct
            state.start_step()
            for i, layer in enumerate(model.layers):
                layer_grads = grads[i]
                if not layer_grads:
                    continue
                for name, param in layer.params().items():
                    state.update((i, name), param, layer_grads[name])
        history.append(EpochStats(epoch=epoch, mean_loss=loss_sum / n, accuracy=correct / n))
    return model, history
