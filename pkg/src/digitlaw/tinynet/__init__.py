"""A small feedforward CNN with exact gradients for both parameters and inputs."""

from digitlaw.tinynet.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from digitlaw.tinynet.layers import Conv2D, Dense, Flatten, MaxPool2, ReLU, Softmax
from digitlaw.tinynet.network import (
    Model,
    build_classifier,
    forward,
    forward_batch,
    grad_input,
    loss,
    predict,
    predict_batch,
    probs_and_input_grad,
)
from digitlaw.tinynet.optim import Adam, EpochStats, SGDMomentum, TrainConfig, train

__all__ = [
    "Adam",
    "CheckpointError",
    "Conv2D",
    "Dense",
    "EpochStats",
    "Flatten",
    "MaxPool2",
    "Model",
    "ReLU",
    "SGDMomentum",
    "Softmax",
    "TrainConfig",
    "build_classifier",
    "forward",
    "forward_batch",
    "grad_input",
    "load_checkpoint",
    "loss",
    "predict",
    "predict_batch",
    "probs_and_input_grad",
    "save_checkpoint",
    "train",
]
