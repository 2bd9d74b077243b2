"""Stable hashing helpers.

Python's builtin ``hash`` is salted per process, so anything that must be
reproducible across runs (feature hashing, derived RNG seeds) goes through
blake2 digests instead.
"""

from __future__ import annotations

import hashlib

_SEP = b"\x1f"


def stable_digest(*parts: object) -> bytes:
    """16-byte blake2s digest of the stringified parts."""
    h = hashlib.blake2s(digest_size=16)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(_SEP)
    return h.digest()


def stable_hash(*parts: object) -> int:
    """Unsigned 64-bit integer hash, identical across processes and platforms."""
    return int.from_bytes(stable_digest(*parts)[:8], "little")


def derive_seed(*parts: object) -> int:
    """Derive an RNG seed from a global seed plus identifying parts.

    Used to give every record (and every patch, reserved token, ...) its own
    deterministic stream without coupling consumption order between records.
    """
    return stable_hash(*parts)
