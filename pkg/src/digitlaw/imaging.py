"""Image tensors and the gradient-magnitude transform.

Everything here is a pure function of its inputs: images are immutable
once constructed and no operation keeps internal state, so the whole
module is safe to call concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Scale(enum.Enum):
    """Value convention carried by an :class:`ImageTensor`.

    UNIT       pixel values in [0, 1]
    EIGHT_BIT  pixel values in [0, 255]
    DERIVED    filter responses and gradient magnitudes computed from
               pixel data: finite, but with no fixed range
    """

    UNIT = "unit"
    EIGHT_BIT = "eight_bit"
    DERIVED = "derived"


@dataclass(frozen=True)
class ImageTensor:
    """An immutable H x W x C array of real pixel (or response) values.

    ``data`` is stored as a read-only float64 array in (row, col, channel)
    order; 2-D input grows a trailing singleton channel axis. Channel count
    must be 1 or 3. Structural invariants (shape, finiteness) are enforced
    at construction; the per-scale value range is checked separately by
    :meth:`validate_range` so intermediate arithmetic results can be
    carried without clipping.
    """

    data: np.ndarray
    scale: Scale = Scale.UNIT

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must have positive height and width, got {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def validate_range(self) -> "ImageTensor":
        """Check the scale-specific value range; returns self when valid."""
        lo, hi = {
            Scale.UNIT: (0.0, 1.0),
            Scale.EIGHT_BIT: (0.0, 255.0),
            Scale.DERIVED: (-np.inf, np.inf),
        }[self.scale]
        if self.data.size and (self.data.min() < lo or self.data.max() > hi):
            raise ValueError(
                f"values outside [{lo}, {hi}] for scale {self.scale.value}: "
                f"min={self.data.min()}, max={self.data.max()}"
            )
        return self

    def to_eight_bit(self) -> "ImageTensor":
        """Return the image on the 0..255 scale (unit images are multiplied by 255)."""
        if self.scale is Scale.EIGHT_BIT:
            return self
        if self.scale is Scale.UNIT:
            return ImageTensor(self.data * 255.0, Scale.EIGHT_BIT)
        raise ValueError("derived data has no defined 8-bit representation")


@dataclass(frozen=True)
class Kernel:
    """A small real-valued convolution stencil (rows x cols)."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.weights, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"kernel must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("kernel weights must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


# 3x3 Sobel stencils. SOBEL_HORIZONTAL responds to horizontal intensity
# change (the x-derivative), SOBEL_VERTICAL to vertical change.
SOBEL_HORIZONTAL = Kernel(np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]))
SOBEL_VERTICAL = Kernel(np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]))


def _convolve2d_plane(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """True convolution of one plane, out[i,j] = sum_{o,p} x[i-o, j-p] k[o,p].

    Kernel offsets o, p run 1..rows and 1..cols; out-of-frame samples
    contribute zero and the output keeps the input size. Positive and
    negative kernel entries are accumulated separately so that zero-sum
    kernels (e.g. Sobel) cancel exactly, bit for bit, on flat regions.
    """
    h, w = x.shape
    ko, kp = k.shape
    padded = np.zeros((h + ko, w + kp))
    padded[ko:, kp:] = x
    pos = np.zeros((h, w))
    neg = np.zeros((h, w))
    for o in range(ko):
        for p in range(kp):
            weight = k[o, p]
            if weight == 0.0:
                continue
            window = padded[ko - 1 - o : ko - 1 - o + h, kp - 1 - p : kp - 1 - p + w]
            if weight > 0.0:
                pos += weight * window
            else:
                neg += (-weight) * window
    return pos - neg


def convolve2d(image: ImageTensor, kernel: Kernel) -> ImageTensor:
    """Discrete 2-D convolution of a single-channel image with zero padding.

    This is true convolution (the kernel is flipped relative to
    cross-correlation) with 1-based kernel offsets, so the response is
    shifted one pixel down and right per kernel row and column compared to
    a centred filter. The shift is irrelevant to magnitude statistics; it
    is kept so the operation matches its defining sum literally.
    """
    if image.channels != 1:
        raise ValueError(f"convolve2d expects a single-channel image, got {image.channels} channels")
    out = _convolve2d_plane(image.data[:, :, 0], kernel.weights)
    return ImageTensor(out, Scale.DERIVED)


def sobel_gradients(image: ImageTensor) -> tuple[ImageTensor, ImageTensor]:
    """Horizontal and vertical Sobel responses (gx, gy) of a single-channel image."""
    gx = convolve2d(image, SOBEL_HORIZONTAL)
    gy = convolve2d(image, SOBEL_VERTICAL)
    return gx, gy


def gradient_magnitude(image: ImageTensor) -> ImageTensor:
    """Per-pixel Sobel gradient magnitude sqrt(gx^2 + gy^2), per channel.

    Multi-channel images produce one magnitude plane per channel; the
    detector pools the digits of all channels downstream. The output is
    nonnegative and carries scale DERIVED.
    """
    planes = []
    for c in range(image.channels):
        plane = image.data[:, :, c]
        gx = _convolve2d_plane(plane, SOBEL_HORIZONTAL.weights)
        gy = _convolve2d_plane(plane, SOBEL_VERTICAL.weights)
        planes.append(np.hypot(gx, gy))
    return ImageTensor(np.stack(planes, axis=-1), Scale.DERIVED)
