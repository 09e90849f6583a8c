#!/usr/bin/env python3
"""Rebuild data/mnist/ from the public npm "mnist" package (MIT licensed).

That package ships 10,000 MNIST digits as JSON, one file per class, with
pixels stored as value/255 rounded to three decimals (so round(v * 255)
recovers the original byte exactly). This script deterministically shuffles
the combined set and writes it as a gzipped big-endian IDX pair.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/build_mnist_subset.py package/src/digits data/mnist
"""

import json
import sys
from pathlib import Path

import numpy as np

from digitlaw.data_io import LabeledDataset, write_mnist_idx
from digitlaw.imaging import ImageTensor, Scale

SHUFFLE_SEED = 20240814


def main(digits_dir: str, out_dir: str) -> None:
    digits_dir = Path(digits_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pixel_rows = []
    labels = []
    for digit in range(10):
        with open(digits_dir / f"{digit}.json") as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        count = flat.size // 784
        assert flat.size == count * 784, f"digit {digit}: ragged pixel payload"
        as_bytes = np.round(flat * 255.0)
        assert np.max(np.abs(as_bytes - flat * 255.0)) < 0.5, "pixels are not 8-bit quantised"
        pixel_rows.append(as_bytes.reshape(count, 28, 28) / 255.0)
        labels.extend([digit] * count)
    images = np.concatenate(pixel_rows)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.random.default_rng(SHUFFLE_SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    dataset = LabeledDataset(
        images=tuple(ImageTensor(img, Scale.UNIT) for img in images),
        labels=tuple(int(v) for v in labels),
        ids=tuple(f"mnist-{i:04d}" for i in range(len(labels))),
        class_count=10,
    )
    write_mnist_idx(
        dataset,
        out / "mnist-10k-images-idx3-ubyte.gz",
        out / "mnist-10k-labels-idx1-ubyte.gz",
    )
    print(f"wrote {len(dataset)} images to {out}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
