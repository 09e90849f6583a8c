"""Layer implementations.

Layers hold parameters only. ``forward`` returns the output together with a
cache that ``backward`` consumes, so a read-only model can serve many
concurrent forward/gradient calls. Batches use channels-last layout
(N, H, W, C); dense layers see (N, D).
"""

from __future__ import annotations

import numpy as np


def _he_uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, shape)


class Conv2D:
    """3x3 convolution, stride 1, zero padding, same-size output."""

    kind = "conv2d"
    KERNEL = 3

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator | None = None):
        if in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        shape = (self.KERNEL, self.KERNEL, in_channels, out_channels)
        if rng is None:
            self.weights = np.zeros(shape)
        else:
            self.weights = _he_uniform(rng, self.KERNEL * self.KERNEL * in_channels, shape)
        self.bias = np.zeros(out_channels)

    def config(self) -> dict:
        return {"in_channels": self.in_channels, "out_channels": self.out_channels}

    @classmethod
    def from_config(cls, cfg: dict) -> "Conv2D":
        return cls(int(cfg["in_channels"]), int(cfg["out_channels"]))

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    def set_param(self, name: str, value: np.ndarray) -> None:
        current = self.params()[name]
        if value.shape != current.shape:
            raise ValueError(f"{self.kind} parameter {name} expects shape {current.shape}, got {value.shape}")
        setattr(self, name, np.ascontiguousarray(value, dtype=np.float64))

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3 or in_shape[2] != self.in_channels:
            raise ValueError(f"conv2d({self.in_channels}->{self.out_channels}) cannot take input shape {in_shape}")
        return (in_shape[0], in_shape[1], self.out_channels)

    def _pad(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        padded = np.zeros((n, h + 2, w + 2, c))
        padded[:, 1:-1, 1:-1, :] = x
        return padded

    def forward(self, x: np.ndarray):
        n, h, w, _ = x.shape
        padded = self._pad(x)
        out = np.broadcast_to(self.bias, (n, h, w, self.out_channels)).copy()
        for dy in range(self.KERNEL):
            for dx in range(self.KERNEL):
                out += padded[:, dy : dy + h, dx : dx + w, :] @ self.weights[dy, dx]
        return out, (x, padded)

    def backward(self, dout: np.ndarray, cache):
        x, padded = cache
        n, h, w, _ = x.shape
        dw = np.zeros_like(self.weights)
        dpadded = np.zeros_like(padded)
        for dy in range(self.KERNEL):
            for dx in range(self.KERNEL):
                window = padded[:, dy : dy + h, dx : dx + w, :]
                dw[dy, dx] = np.tensordot(window, dout, axes=([0, 1, 2], [0, 1, 2]))
                dpadded[:, dy : dy + h, dx : dx + w, :] += dout @ self.weights[dy, dx].T
        db = dout.sum(axis=(0, 1, 2))
        return dpadded[:, 1:-1, 1:-1, :], {"weights": dw, "bias": db}


class ReLU:
    kind = "relu"

    def config(self) -> dict:
        return {}

    @classmethod
    def from_config(cls, cfg: dict) -> "ReLU":
        return cls()

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def set_param(self, name: str, value: np.ndarray) -> None:
        raise ValueError(f"relu has no parameter {name}")

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def forward(self, x: np.ndarray):
        return np.maximum(x, 0.0), x > 0.0

    def backward(self, dout: np.ndarray, cache):
        return dout * cache, {}


class MaxPool2:
    """2x2 max pooling with stride 2; odd trailing rows/cols are dropped."""

    kind = "maxpool2"

    def config(self) -> dict:
        return {}

    @classmethod
    def from_config(cls, cfg: dict) -> "MaxPool2":
        return cls()

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def set_param(self, name: str, value: np.ndarray) -> None:
        raise ValueError(f"maxpool2 has no parameter {name}")

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3 or in_shape[0] < 2 or in_shape[1] < 2:
            raise ValueError(f"maxpool2 cannot take input shape {in_shape}")
        return (in_shape[0] // 2, in_shape[1] // 2, in_shape[2])

    def _windows(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        trimmed = x[:, : 2 * h2, : 2 * w2, :]
        return (
            trimmed.reshape(n, h2, 2, w2, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, h2, w2, c, 4)
        )

    def forward(self, x: np.ndarray):
        windows = self._windows(x)
        # argmax takes the first maximum, which keeps tie routing deterministic
        idx = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx)

    def backward(self, dout: np.ndarray, cache):
        in_shape, idx = cache
        n, h, w, c = in_shape
        h2, w2 = h // 2, w // 2
        scattered = np.zeros((n, h2, w2, c, 4))
        np.put_along_axis(scattered, idx[..., None], dout[..., None], axis=-1)
        dtrimmed = (
            scattered.reshape(n, h2, w2, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, 2 * h2, 2 * w2, c)
        )
        dx = np.zeros(in_shape)
        dx[:, : 2 * h2, : 2 * w2, :] = dtrimmed
        return dx, {}


class Flatten:
    kind = "flatten"

    def config(self) -> dict:
        return {}

    @classmethod
    def from_config(cls, cfg: dict) -> "Flatten":
        return cls()

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def set_param(self, name: str, value: np.ndarray) -> None:
        raise ValueError(f"flatten has no parameter {name}")

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        size = 1
        for dim in in_shape:
            size *= dim
        return (size,)

    def forward(self, x: np.ndarray):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout: np.ndarray, cache):
        return dout.reshape(cache), {}


class Dense:
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dense dimensions must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.weights = np.zeros((in_dim, out_dim))
        else:
            self.weights = _he_uniform(rng, in_dim, (in_dim, out_dim))
        self.bias = np.zeros(out_dim)

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim}

    @classmethod
    def from_config(cls, cfg: dict) -> "Dense":
        return cls(int(cfg["in_dim"]), int(cfg["out_dim"]))

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    def set_param(self, name: str, value: np.ndarray) -> None:
        current = self.params()[name]
        if value.shape != current.shape:
            raise ValueError(f"{self.kind} parameter {name} expects shape {current.shape}, got {value.shape}")
        setattr(self, name, np.ascontiguousarray(value, dtype=np.float64))

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 1 or in_shape[0] != self.in_dim:
            raise ValueError(f"dense({self.in_dim}->{self.out_dim}) cannot take input shape {in_shape}")
        return (self.out_dim,)

    def forward(self, x: np.ndarray):
        return x @ self.weights + self.bias, x

    def backward(self, dout: np.ndarray, cache):
        dw = cache.T @ dout
        db = dout.sum(axis=0)
        dx = dout @ self.weights.T
        return dx, {"weights": dw, "bias": db}


class Softmax:
    kind = "softmax"

    def config(self) -> dict:
        return {}

    @classmethod
    def from_config(cls, cfg: dict) -> "Softmax":
        return cls()

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def set_param(self, name: str, value: np.ndarray) -> None:
        raise ValueError(f"softmax has no parameter {name}")

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 1:
            raise ValueError(f"softmax expects a flat input, got shape {in_shape}")
        return in_shape

    def forward(self, x: np.ndarray):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, dout: np.ndarray, cache):
        p = cache
        inner = (dout * p).sum(axis=-1, keepdims=True)
        return p * (dout - inner), {}


LAYER_KINDS = {
    cls.kind: cls for cls in (Conv2D, ReLU, MaxPool2, Flatten, Dense, Softmax)
}
