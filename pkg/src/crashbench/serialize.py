"""Canonical JSON encoding and content digests.

Every artifact file (run logs, score cards, golden messages) uses the same
canonical form: sorted keys, no whitespace, shortest round-trip floats.
Identical values therefore always produce identical bytes, which is what
the determinism guarantees are checked against.
"""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(obj) -> str:
    return sha256_hex(canonical_json(obj))
