"""Small shared helpers: seed derivation, fingerprints, population stddev."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Derive a stable 63-bit seed from a tuple of labels.

    Uses SHA-256 over the stringified parts, so the mapping is identical
    across processes and platforms (unlike the builtin ``hash``).
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def array_fingerprint(*arrays: np.ndarray) -> str:
    """Short stable digest of the contents of one or more arrays."""
    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def population_std(values) -> float:
    """Standard deviation with the 1/n convention."""
    return float(np.std(np.asarray(values, dtype=float)))
