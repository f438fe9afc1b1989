"""Checkpoint files: a JSON header followed by a float32 parameter payload.

Layout::

    b"NRSRCKPT"                magic, 8 bytes
    uint32 little-endian       header length in bytes
    header                     UTF-8 JSON, keys sorted
    payload                    little-endian float32, arrays in header order

The header records the schema version, block name, phase, seeds,
hyperparameters and, for every array, its name and shape.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .emotion import EmotionModel
from .manifest import atomic_write_bytes
from .snr_detector import LinearScorer

MAGIC = b"NRSRCKPT"
SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays: Dict[str, np.ndarray], meta: dict) -> Path:
    names = list(arrays)
    header = dict(meta)
    header["schema_version"] = SCHEMA_VERSION
    header["arrays"] = [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names]
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arrays[k], dtype="<f4").tobytes() for k in names)
    atomic_write_bytes(path, MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload)
    return Path(path)


def load_arrays(path) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an NRSER checkpoint")
    try:
        (hlen,) = struct.unpack("<I", data[8:12])
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema version {header.get('schema_version')}")
    offset = 12 + hlen
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        if offset + 4 * count > len(data):
            raise CheckpointError(f"{path}: payload size does not match header")
        chunk = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arrays[spec["name"]] = chunk.astype(np.float64).reshape(spec["shape"])
        offset += 4 * count
    if offset != len(data):
        raise CheckpointError(f"{path}: payload size does not match header")
    return arrays, header


def save_scorer(path, scorer: LinearScorer, meta: dict) -> Path:
    arrays = {
        "weights": scorer.weights,
        "bias": np.array([scorer.bias]),
        "shift": scorer.shift,
        "scale": scorer.scale,
    }
    return save_arrays(path, arrays, dict(meta, block="snr_scorer"))


def load_scorer(path) -> Tuple[LinearScorer, dict]:
    arrays, header = load_arrays(path)
    if header.get("block") != "snr_scorer":
        raise CheckpointError(f"{path}: holds a {header.get('block')!r} block, not an SNR scorer")
    return LinearScorer(arrays["weights"], float(arrays["bias"][0]), arrays["shift"], arrays["scale"]), header


def save_emotion(path, model: EmotionModel, meta: dict) -> Path:
    arrays = dict(model.params)
    arrays["feature_shift"] = model.feature_shift
    arrays["feature_scale"] = model.feature_scale
    return save_arrays(path, arrays, dict(meta, block="emotion"))


def load_emotion(path) -> Tuple[EmotionModel, dict]:
    arrays, header = load_arrays(path)
    if header.get("block") != "emotion":
        raise CheckpointError(f"{path}: holds a {header.get('block')!r} block, not an emotion model")
    shift = arrays.pop("feature_shift")
    scale = arrays.pop("feature_scale")
    return EmotionModel(arrays, shift, scale), header
