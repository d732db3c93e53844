"""Versioned binary model checkpoints.

Layout (little-endian)::

    b"MTSC" | u16 version | u16 reserved | u32 header length
    header: UTF-8 JSON {"spec": {...}, "n_channels": int,
                        "arrays": [[name, shape], ...]}
    payload: each array as float64, C order, in header order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .linear import ForecasterSpec, build_forecaster

MAGIC = b"MTSC"
VERSION = 1
_PREFIX = struct.Struct("<4sHHI")


def save_model(model, path) -> None:
    names = sorted(model.params)
    header = {
        "spec": model.spec.to_json(),
        "n_channels": model.n_channels,
        "arrays": [[n, list(model.params[n].shape)] for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, 0, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ParseError(1, None, f"{path}: truncated checkpoint")
    magic, version, _, hlen = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION:
        raise ParseError(1, None, f"{path}: not a version-{VERSION} checkpoint")
    off = _PREFIX.size
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    model = build_forecaster(ForecasterSpec(**header["spec"]), header["n_channels"])
    params = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += count * 8
    if off != len(raw):
        raise ParseError(1, None, f"{path}: trailing bytes in checkpoint")
    model.params = params
    return model
