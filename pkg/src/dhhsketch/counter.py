"""Stochastic-averaging distinct counter with a HIP estimate.

Elements are hashed to one of ``ell`` buckets and each bucket keeps the
minimum unit hash it has seen. Whenever a bucket value drops, the estimate
grows by the inverse of the probability that a fresh element would have
caused a drop, ``ell / sum(c)``. The estimate is unbiased and its relative
standard error is roughly ``1/sqrt(2*ell)``.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import kernels
from .hashing import HashSeed, Purpose, bucket_array, fingerprint, random_seed, unit_hash_array

_MAGIC = b"DCTR"
_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")


class DistinctCounter:
    """Approximate count of distinct (key, subkey) pairs.

    Parameters
    ----------
    ell:
        Number of buckets, at least 2.
    hash_seed:
        Base seed for the element and bucket hash families. Random when
        omitted.
    """

    def __init__(self, ell: int, hash_seed: int | None = None):
        if ell < 2:
            raise ValueError(f"ell must be >= 2, got {ell}")
        self.ell = int(ell)
        self.hash_seed = random_seed() if hash_seed is None else int(hash_seed)
        self.element_seed = HashSeed(self.hash_seed, Purpose.ELEMENT)
        self.bucket_seed = HashSeed(self.hash_seed, Purpose.BUCKET)
        self._c = np.ones(self.ell, dtype=np.float64)
        self._cardest = np.zeros(1, dtype=np.float64)

    @property
    def buckets(self) -> np.ndarray:
        view = self._c.view()
        view.flags.writeable = False
        return view

    @property
    def seed(self) -> float:
        """Minimum hash over all merged elements (1.0 when empty)."""
        return float(self._c.min())

    def merge_hashed(self, h: float, b: int) -> bool:
        if not 0.0 <= h < 1.0:
            raise ValueError(f"hash value must lie in [0, 1), got {h}")
        if not 0 <= b < self.ell:
            raise ValueError(f"bucket {b} outside [0, {self.ell})")
        hs = np.array([h], dtype=np.float64)
        bs = np.array([b], dtype=np.int64)
        return kernels.hip_merge(self._c, self._cardest, hs, bs) > 0

    def merge(self, key, subkey) -> bool:
        fp = np.array([fingerprint(key, subkey)], dtype=np.uint64)
        return self.merge_fingerprints(fp) > 0

    def merge_fingerprints(self, fps: np.ndarray) -> int:
        """Merge a batch of pair fingerprints; returns how many changed state."""
        h = unit_hash_array(self.element_seed, fps)
        b = bucket_array(self.bucket_seed, fps, self.ell)
        return int(kernels.hip_merge(self._c, self._cardest, h, b))

    def card_est(self) -> float:
        return float(self._cardest[0])

    def std_error(self) -> float:
        return self.card_est() / math.sqrt(2 * self.ell)

    def to_bytes(self) -> bytes:
        return (
            _HEADER.pack(_MAGIC, _VERSION, self.ell, self.hash_seed)
            + self._c.astype("<f8").tobytes()
            + struct.pack("<d", self.card_est())
        )

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["DistinctCounter", int]:
        magic, version, ell, hash_seed = _HEADER.unpack_from(data, offset)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a distinct-counter record")
        offset += _HEADER.size
        ctr = cls(ell, hash_seed)
        ctr._c[:] = np.frombuffer(data, dtype="<f8", count=ell, offset=offset)
        offset += 8 * ell
        (ctr._cardest[0],) = struct.unpack_from("<d", data, offset)
        return ctr, offset + 8

    def __eq__(self, other):
        if not isinstance(other, DistinctCounter):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __repr__(self):
        return f"DistinctCounter(ell={self.ell}, card_est={self.card_est():.3f})"
