"""Deterministic sub-seed derivation.

Every run takes one named root seed; all other randomness is derived from it
by hashing a descriptive label, so adding or reordering pipeline stages never
shifts the random streams of the others.
"""

import hashlib


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
