"""Deterministic seed derivation for named sub-streams.

Python's built-in hash() is salted per process, so sub-seeds are derived
with sha256 over a "/"-joined label path instead. The same parts always
yield the same 64-bit seed on every platform and run.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: object) -> int:
    """Map a label path such as (master, "cycle", 2, "train", 17) to a seed."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(*parts: object) -> random.Random:
    """A fresh generator seeded from the given label path."""
    return random.Random(derive_seed(*parts))
