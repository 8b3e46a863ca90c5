"""Deterministic seed derivation.

All randomness in the toolkit flows from one master seed. Stages draw from
named substreams so that, e.g., changing the masking seed never reshuffles
the subset selection. Derivation goes through blake2b rather than Python's
builtin hash(), which is salted per process.
"""

import hashlib


def derive_seed(master: int, *names: str) -> int:
    """Derive a child seed from a master seed and a substream name path."""
    key = ":".join([str(master), *names]).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big")
