"""JSON checkpoints: network config, every tensor (row-major) and the training seed.

Floats are written with ``repr`` precision so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .network import NetworkConfig, NetworkParams

FORMAT = "nearfield-ce-checkpoint"
VERSION = 1


def _tensor(a: np.ndarray) -> dict:
    a = np.asarray(a, float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel(order="C")]}


def _array(entry: dict) -> np.ndarray:
    return np.array(entry["data"], dtype=float).reshape(entry["shape"])


def to_dict(cfg: NetworkConfig, params: NetworkParams, seed: int | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": dataclasses.asdict(cfg),
        "seed": seed,
        "input_scale": float(params.input_scale),
        "weights": {k: _tensor(v) for k, v in sorted(params.weights.items())},
        "buffers": {k: _tensor(v) for k, v in sorted(params.buffers.items())},
    }


def from_dict(doc: dict) -> tuple[NetworkConfig, NetworkParams, int | None]:
    if doc.get("format") != FORMAT:
        raise ValueError("not a checkpoint document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = NetworkConfig(**doc["config"])
    params = NetworkParams({k: _array(v) for k, v in doc["weights"].items()},
                           {k: _array(v) for k, v in doc["buffers"].items()},
                           float(doc["input_scale"]))
    return cfg, params, doc.get("seed")


def save(path, cfg: NetworkConfig, params: NetworkParams, seed: int | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg, params, seed)))


def load(path) -> tuple[NetworkConfig, NetworkParams, int | None]:
    return from_dict(json.loads(Path(path).read_text()))
