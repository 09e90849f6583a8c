"""Model container, forward pass, cross-entropy loss and exact input gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from digitlaw.imaging import ImageTensor, Scale
from digitlaw.tinynet.layers import Conv2D, Dense, Flatten, MaxPool2, ReLU, Softmax


@dataclass
class Model:
    """An ordered stack of layers ending in a softmax over ``num_classes``.

    Construction verifies that consecutive layer shapes compose and that the
    final output is a probability vector of the right width.
    """

    layers: list = field(default_factory=list)
    input_shape: tuple[int, int, int] = (1, 1, 1)
    num_classes: int = 2

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("a classifier needs at least two classes")
        if len(self.input_shape) != 3:
            raise ValueError(f"input shape must be (H, W, C), got {self.input_shape}")
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ValueError("the layer stack must end with a softmax")
        shape: tuple[int, ...] = tuple(self.input_shape)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (self.num_classes,):
            raise ValueError(f"layer stack produces shape {shape}, expected ({self.num_classes},)")

    def parameter_arrays(self):
        """Yield (layer_index, name, array) for every trainable parameter."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                yield i, name, arr


def build_classifier(
    input_shape: tuple[int, int, int],
    num_classes: int,
    *,
    conv_channels: tuple[int, ...] = (16, 32),
    dense_units: tuple[int, ...] = (128,),
    rng_seed: int = 0,
) -> Model:
    """Conv/pool feature stack followed by dense layers and a softmax head.

    Each conv block is Conv3x3 -> ReLU -> MaxPool2x2. The defaults give the
    reduced desk-scale classifier used throughout the experiments.
    """
    rng = np.random.default_rng(rng_seed)
    h, w, c = input_shape
    layers: list = []
    for out_c in conv_channels:
        layers.append(Conv2D(c, out_c, rng))
        layers.append(ReLU())
        layers.append(MaxPool2())
        c = out_c
        h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError("input too small for the requested conv/pool stack")
    layers.append(Flatten())
    dim = h * w * c
    for units in dense_units:
        layers.append(Dense(dim, units, rng))
        layers.append(ReLU())
        dim = units
    layers.append(Dense(dim, num_classes, rng))
    layers.append(Softmax())
    return Model(layers=layers, input_shape=input_shape, num_classes=num_classes)


def _forward_with_caches(model: Model, x: np.ndarray):
    caches = []
    out = x
    for layer in model.layers:
        out, cache = layer.forward(out)
        caches.append(cache)
    return out, caches


def _backward_from_logits(model: Model, delta: np.ndarray, caches, *, collect_grads: bool):
    """Backpropagate a gradient at the logits (softmax input) to the input.

    The softmax layer is skipped because the fused cross-entropy delta is
    already expressed at the logits.
    """
    grads: list[dict | None] = [None] * len(model.layers)
    d = delta
    for i in range(len(model.layers) - 2, -1, -1):
        d, g = model.layers[i].backward(d, caches[i])
        if collect_grads:
            grads[i] = g
    return d, grads


def forward_batch(model: Model, batch: np.ndarray) -> np.ndarray:
    """Class probabilities for a (N, H, W, C) batch."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != tuple(model.input_shape):
        raise ValueError(f"batch shape {batch.shape} does not match model input {model.input_shape}")
    probs, _ = _forward_with_caches(model, batch)
    return probs


def forward(model: Model, image: ImageTensor) -> np.ndarray:
    """Class probabilities for one image; positive, summing to 1."""
    if image.shape != tuple(model.input_shape):
        raise ValueError(f"image shape {image.shape} does not match model input {model.input_shape}")
    return forward_batch(model, image.data[np.newaxis])[0]


def predict_batch(model: Model, batch: np.ndarray) -> np.ndarray:
    return forward_batch(model, batch).argmax(axis=1)


def predict(model: Model, image: ImageTensor) -> int:
    return int(forward(model, image).argmax())


def _check_label(model: Model, label: int) -> int:
    label = int(label)
    if not 0 <= label < model.num_classes:
        raise ValueError(f"label {label} outside 0..{model.num_classes - 1}")
    return label


def loss(model: Model, image: ImageTensor, label: int) -> float:
    """Cross-entropy -log p(label | image)."""
    label = _check_label(model, label)
    return -math.log(forward(model, image)[label])


def grad_input(model: Model, image: ImageTensor, label: int) -> ImageTensor:
    """Exact gradient of the cross-entropy loss with respect to the image."""
    label = _check_label(model, label)
    if image.shape != tuple(model.input_shape):
        raise ValueError(f"image shape {image.shape} does not match model input {model.input_shape}")
    _, grad = probs_and_input_grad(model, image.data, label)
    return ImageTensor(grad, Scale.DERIVED)


def probs_and_input_grad(model: Model, x: np.ndarray, label: int) -> tuple[np.ndarray, np.ndarray]:
    """One fused pass returning (probabilities, dLoss/dInput) for a raw array.

    This is the attack hot path: one forward pass serves classification,
    loss evaluation and the input gradient.
    """
    label = _check_label(model, label)
    probs, caches = _forward_with_caches(model, x[np.newaxis])
    delta = probs.copy()
    delta[0, label] -= 1.0
    dx, _ = _backward_from_logits(model, delta, caches, collect_grads=False)
    return probs[0], dx[0]


def batch_loss_and_grads(model: Model, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch plus per-layer parameter gradients.

    Returns (mean_loss, correct_count, grads) where grads aligns with
    ``model.layers`` (None for parameter-free layers is an empty dict).
    """
    probs, caches = _forward_with_caches(model, x)
    n = x.shape[0]
    idx = np.arange(n)
    picked = probs[idx, labels]
    mean_loss = float(-np.log(picked).mean())
    correct = int((probs.argmax(axis=1) == labels).sum())
    delta = probs.copy()
    delta[idx, labels] -= 1.0
    delta /= n
    _, grads = _backward_from_logits(model, delta, caches, collect_grads=True)
    return mean_loss, correct, grads
