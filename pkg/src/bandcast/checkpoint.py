"""Checkpoint serialization: canonical JSON, tensors as float64 lists with shapes."""

import hashlib
import json
import os
from pathlib import Path
import tempfile

import numpy as np

from .errors import IncompatibleCheckpoint, MissingCheckpoint


def encode_tensor(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"dtype": "float64", "shape": list(arr.shape), "data": arr.ravel().tolist()}


def decode_tensor(obj):
    if obj.get("dtype") != "float64":
        raise IncompatibleCheckpoint(f"unsupported tensor dtype {obj.get('dtype')!r}")
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])


def dumps(payload):
    """Canonical serialization; identical payloads give identical bytes."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def checksum(payload):
    return hashlib.sha256(dumps(payload)).hexdigest()


def atomic_write_bytes(path, data):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save(path, payload):
    atomic_write_bytes(path, dumps(payload))
    return checksum(payload)


def load(path, expected_format):
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"checkpoint {path} does not exist")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != expected_format:
        raise IncompatibleCheckpoint(
            f"{path}: expected format {expected_format!r}, found {payload.get('format')!r}"
        )
    return payload
