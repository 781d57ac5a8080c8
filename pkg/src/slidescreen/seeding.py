"""Deterministic seed derivation for independent pipeline consumers."""

import hashlib


def derive_seed(master: int, role: str) -> int:
    """Derive a stable 64-bit sub-seed from a master seed and a role tag.

    Every randomized component (per-fold training, per-tree bagging,
    per-slide synthesis) gets its own role so results are independent of
    execution order and schedule.
    """
    digest = hashlib.sha256(f"{master}:{role}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
