"""JSON-safe encoding of arrays and deterministic JSON output.

Floats are written with Python's shortest round-trip repr, so a decode of an
encode reproduces every array bit for bit.
"""
import hashlib
import json

import numpy as np


def encode_array(a):
    a = np.asarray(a)
    kind = "int" if np.issubdtype(a.dtype, np.integer) else "float"
    return {"dtype": kind, "shape": list(a.shape), "data": a.ravel().tolist()}


def decode_array(d):
    dtype = np.int64 if d["dtype"] == "int" else np.float64
    return np.asarray(d["data"], dtype=dtype).reshape(d["shape"])


def dumps(obj):
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def digest(obj):
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
