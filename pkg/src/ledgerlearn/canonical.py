"""Canonical JSON encoding and SHA-256 helpers.

Everything that gets hashed or written to a journal goes through
:func:`canonical_bytes` so that the bytes on disk are the bytes that were
hashed.  Floats use Python's shortest round-trip repr (at most 17
significant digits); keys are sorted; no whitespace; NaN/inf are refused.
"""
import hashlib
import json
import re

import numpy as np

HEX64 = re.compile(r"^[0-9a-f]{64}$")
ZERO_HASH = "0" * 64


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not canonically serializable: {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False, default=_default)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj) -> str:
    return sha256_hex(canonical_bytes(obj))


def is_hex64(value) -> bool:
    return isinstance(value, str) and HEX64.match(value) is not None
