"""Self-describing binary checkpoints.

Layout: 4-byte magic, little-endian u32 format version, little-endian u64
header length, a UTF-8 JSON header (layer descriptors plus an array index),
then the parameter payload as little-endian float64 in C order, in header
index order. Loading verifies every structural detail and never returns a
partially filled model.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from digitlaw.tinynet.layers import LAYER_KINDS
from digitlaw.tinynet.network import Model

MAGIC = b"DLTN"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated or references unknown layers."""


def save_checkpoint(model: Model, path: str | Path) -> None:
    arrays = []
    payload_parts = []
    for i, name, arr in model.parameter_arrays():
        arrays.append({"layer": i, "name": name, "shape": list(arr.shape)})
        payload_parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = {
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "layers": [{"kind": layer.kind, **layer.config()} for layer in model.layers],
        "arrays": arrays,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for part in payload_parts:
            f.write(part)


def load_checkpoint(path: str | Path) -> Model:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise CheckpointError(f"{path}: file too short to hold a checkpoint header")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    if len(blob) < 16 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: undecodable header ({exc})") from exc

    try:
        layer_specs = header["layers"]
        array_specs = header["arrays"]
        input_shape = tuple(int(v) for v in header["input_shape"])
        num_classes = int(header["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: incomplete header ({exc})") from exc

    layers = []
    for spec in layer_specs:
        kind = spec.get("kind")
        cls = LAYER_KINDS.get(kind)
        if cls is None:
            raise CheckpointError(f"{path}: unknown layer kind {kind!r}")
        try:
            layers.append(cls.from_config(spec))
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad configuration for layer {kind!r} ({exc})") from exc

    offset = 16 + header_len
    for spec in array_specs:
        try:
            layer_idx = int(spec["layer"])
            name = str(spec["name"])
            shape = tuple(int(v) for v in spec["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad array entry ({exc})") from exc
        if not 0 <= layer_idx < len(layers):
            raise CheckpointError(f"{path}: array entry references missing layer {layer_idx}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated payload for {name} of layer {layer_idx}")
        values = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        try:
            layers[layer_idx].set_param(name, values.astype(np.float64))
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"{path}: parameter mismatch ({exc})") from exc
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} unexpected trailing bytes")

    try:
        return Model(layers=layers, input_shape=input_shape, num_classes=num_classes)
    except ValueError as exc:
        raise CheckpointError(f"{path}: inconsistent architecture ({exc})") from exc
