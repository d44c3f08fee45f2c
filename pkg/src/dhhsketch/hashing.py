"""Seedable hashing of (key, subkey) pairs.

Every sketch draws its randomness from two independent hash families: one
mapping a pair to the unit interval and one mapping it to a bucket index.
A third family drives the coin flips of classic Sample-and-Hold and the
per-element draws of combined sampling.

Hashing happens in two stages. A pair is first reduced to an unseeded 64-bit
fingerprint of ``key || 0x00 || subkey`` (blake2b, computed once per distinct
pair and cached by the stream encoder). The fingerprint is then pushed through
two rounds of the SplitMix64 finalizer keyed by a per-purpose seed. The second
stage is what the sketches run per element, so it exists both as a vectorized
numpy routine and as a numba kernel.
"""

from __future__ import annotations

import enum
import hashlib
import secrets
from dataclasses import dataclass

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

MASK64 = (1 << 64) - 1
_UNIT_SCALE = 2.0 ** -53

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


class Purpose(enum.Enum):
    ELEMENT = 0x5EED_E1E7_0000_0001
    BUCKET = 0x5EED_B0C7_0000_0002
    SH_COIN = 0x5EED_C014_0000_0003


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class HashSeed:
    """A 64-bit base seed bound to one purpose.

    Seeds with the same base but different purposes derive unrelated
    internal keys, so their hash families behave independently.
    """

    value: int
    purpose: Purpose = Purpose.ELEMENT

    def __post_init__(self):
        if not 0 <= self.value <= MASK64:
            raise ValueError(f"hash seed must fit in 64 bits, got {self.value}")

    @property
    def derived(self) -> int:
        return mix64(mix64(self.value ^ self.purpose.value) + self.purpose.value)

    def with_purpose(self, purpose: Purpose) -> "HashSeed":
        return HashSeed(self.value, purpose)


def parse_seed(text: str) -> int:
    """Parse a decimal or ``0x``-prefixed hex seed."""
    text = text.strip().lower()
    value = int(text, 16) if text.startswith("0x") else int(text, 10)
    if not 0 <= value <= MASK64:
        raise ValueError(f"hash seed out of 64-bit range: {text}")
    return value


def random_seed() -> int:
    return secrets.randbits(64)


def _as_bytes(s) -> bytes:
    return s.encode("utf-8") if isinstance(s, str) else bytes(s)


def fingerprint(key, subkey) -> int:
    key = _as_bytes(key)
    if not key:
        raise ValueError("key must be non-empty")
    digest = hashlib.blake2b(key + b"\x00" + _as_bytes(subkey), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# -- per-element stage ------------------------------------------------------

def _hash64_numpy(fps: np.ndarray, seed: int) -> np.ndarray:
    s = np.uint64(seed)
    z = fps ^ s
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    z = z ^ (z >> np.uint64(31))
    z = z + s
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@maybe_njit
def _hash64_kernel(fps, seed, out):
    m1 = np.uint64(_M1)
    m2 = np.uint64(_M2)
    s30 = np.uint64(30)
    s27 = np.uint64(27)
    s31 = np.uint64(31)
    for i in range(fps.shape[0]):
        z = fps[i] ^ seed
        z = (z ^ (z >> s30)) * m1
        z = (z ^ (z >> s27)) * m2
        z = z ^ (z >> s31)
        z = z + seed
        z = (z ^ (z >> s30)) * m1
        z = (z ^ (z >> s27)) * m2
        out[i] = z ^ (z >> s31)


def hash64_array(fps: np.ndarray, seed: int) -> np.ndarray:
    fps = np.ascontiguousarray(fps, dtype=np.uint64)
    if NUMBA_ENABLED:
        out = np.empty_like(fps)
        _hash64_kernel(fps, np.uint64(seed), out)
        return out
    with np.errstate(over="ignore"):
        return _hash64_numpy(fps, seed)


def unit_hash_array(seed: HashSeed, fps: np.ndarray) -> np.ndarray:
    """Unit-interval hashes for an array of pair fingerprints.

    The top 53 bits of the mixed digest are kept, so every value is an exact
    double in ``[0, 1)``; dividing the full 64-bit digest by ``2**64`` can
    round up to 1.0.
    """
    z = hash64_array(fps, seed.derived)
    return (z >> np.uint64(11)).astype(np.float64) * _UNIT_SCALE


def bucket_array(seed: HashSeed, fps: np.ndarray, ell: int) -> np.ndarray:
    if ell < 1:
        raise ValueError(f"bucket count must be >= 1, got {ell}")
    z = hash64_array(fps, seed.derived)
    return (z % np.uint64(ell)).astype(np.int64)


def _mixed_scalar(seed: HashSeed, fp: int) -> int:
    s = seed.derived
    return mix64((mix64(fp ^ s) + s) & MASK64)


def unit_hash(seed: HashSeed, key, subkey) -> float:
    return (_mixed_scalar(seed, fingerprint(key, subkey)) >> 11) * _UNIT_SCALE


def bucket_of(seed: HashSeed, key, subkey, ell: int) -> int:
    if ell < 1:
        raise ValueError(f"bucket count must be >= 1, got {ell}")
    return _mixed_scalar(seed, fingerprint(key, subkey)) % ell
