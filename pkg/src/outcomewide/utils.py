"""Small shared helpers: seed derivation and canonical JSON."""

from __future__ import annotations

import hashlib
import json


def derive_seed(master: int, *tags) -> int:
    """Stable 63-bit seed derived from a master seed and string tags.

    Keying streams by name (not position) keeps each consumer's draws
    unchanged when unrelated parts of a run are added or removed.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for t in tags:
        h.update(b"\x1f")
        h.update(str(t).encode())
    return int.from_bytes(h.digest()[:8], "big") >> 1


def canonical_json(obj) -> str:
    """Deterministic JSON text (sorted keys, no whitespace drift)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
