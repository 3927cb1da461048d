"""JSON checkpoints: config echo plus one flat parameter array.

Layout::

    {"format": "hazfractal-hgnn", "version": 1,
     "config": {...network config...},
     "meta": {...anything the caller wants echoed, e.g. DFA config, aspect...},
     "param_order": [[name, shape], ...],
     "params": [float, ...]}

``params`` concatenates every array flattened in C order following
``param_order``.  Floats are written with ``repr`` precision, so a round
trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .network import HgnnConfig, flatten, param_shapes, unflatten

FORMAT = "hazfractal-hgnn"
VERSION = 1


def to_dict(params: dict, config: HgnnConfig, meta: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": config.to_dict(),
        "meta": meta or {},
        "param_order": [[name, list(shape)] for name, shape in param_shapes(config).items()],
        "params": flatten(params, config).tolist(),
    }


def save(path, params: dict, config: HgnnConfig, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(params, config, meta)) + "\n", encoding="utf-8")


def from_dict(data: dict) -> tuple[dict, HgnnConfig, dict]:
    if data.get("format") != FORMAT or data.get("version") != VERSION:
        raise ConfigError("not a supported checkpoint (format/version mismatch)")
    config = HgnnConfig.from_dict(data["config"])
    expected = [[n, list(s)] for n, s in param_shapes(config).items()]
    if data["param_order"] != expected:
        raise ConfigError("checkpoint parameter layout does not match its config")
    return unflatten(np.asarray(data["params"], dtype=np.float64), config), config, data.get("meta", {})


def load(path) -> tuple[dict, HgnnConfig, dict]:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
