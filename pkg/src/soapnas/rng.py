"""Named, splittable random streams.

Every random decision in the pipeline draws from a stream addressed by a
path of labels under the run seed, e.g. ``root(seed).child("supernet", 3)``.
A stream's draws therefore depend only on (seed, label path), never on how
much randomness other stages consumed — which is what makes stages
individually resumable and bit-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

_DIGEST_BYTES = 16


def _label_bytes(label) -> bytes:
    if isinstance(label, bytes):
        return b"b" + label
    if isinstance(label, str):
        return b"s" + label.encode("utf-8")
    if isinstance(label, (int, np.integer)):
        return b"i" + int(label).to_bytes(16, "little", signed=True)
    raise TypeError(f"unsupported stream label type: {type(label)!r}")


class RngStream:
    """A deterministic RNG stream identified by a 128-bit key."""

    __slots__ = ("key",)

    def __init__(self, key: bytes):
        if len(key) != _DIGEST_BYTES:
            raise ValueError("stream key must be 16 bytes")
        self.key = key

    def child(self, *labels) -> "RngStream":
        key = self.key
        for label in labels:
            h = hashlib.blake2b(_label_bytes(label), digest_size=_DIGEST_BYTES, key=key)
            key = h.digest()
        return RngStream(key)

    def generator(self) -> np.random.Generator:
        """A fresh generator seeded from this stream's key.

        Calling twice returns generators that produce identical sequences.
        """
        return np.random.Generator(np.random.PCG64(int.from_bytes(self.key, "little")))

    def integer(self) -> int:
        """A stable 63-bit seed derived from this stream's key."""
        return int.from_bytes(self.key[:8], "little") & (2**63 - 1)

    def __repr__(self):
        return f"RngStream({self.key.hex()})"


def root(seed: int) -> RngStream:
    h = hashlib.blake2b(
        int(seed).to_bytes(16, "little", signed=True), digest_size=_DIGEST_BYTES
    )
    return RngStream(h.digest())
