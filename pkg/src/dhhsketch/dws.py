"""Distinct weighted sampling.

A cache of per-key distinct counters where admission is decided by hashing
the (key, subkey) pair instead of flipping a coin, so repeated pairs never
change the sample. The cached key set is a ppswor sample by distinct weight
``w_x``. Each cached key carries the threshold it entered under, which bounds
how many distinct subkeys went unseen before it was cached.

Three flavours share one update kernel:

* ``FixedThresholdDws`` admits a key when a pair hash falls below a fixed
  threshold; the cache is unbounded.
* ``DwsSketch`` keeps the ``k`` keys with the smallest seeds and lowers the
  threshold to the seed of each evicted key.
* ``GenericDwsSketch`` is the same fixed-size scheme with any counter object
  plugged in; it is a slow reference path.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .counter import DistinctCounter
from .hashing import HashSeed, Purpose, bucket_array, fingerprint, random_seed, unit_hash, unit_hash_array
from .stream import EncodedStream, encode_pairs

_DWS_MAGIC = b"DWSK"
_VERSION = 1
_SKETCH_HEADER = struct.Struct("<4sHBIIQdI")
_ENTRY_HEADER = struct.Struct("<Idd")


def coefficient_for(confidence: float) -> float:
    """Normal-approximation multiplier for a two-sided interval.

    0.95 maps to the conventional round value 2.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    if math.isclose(confidence, 0.95):
        return 2.0
    return NormalDist().inv_cdf(0.5 + confidence / 2)


@dataclass(frozen=True)
class WeightEstimate:
    point: float
    lo: float
    hi: float
    confidence: float

    def __contains__(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2


@dataclass
class DwsEntry:
    key: bytes
    counter: DistinctCounter
    seed: float
    tau_entry: float
    entered_at: int = 0

    @property
    def card_est(self) -> float:
        return self.counter.card_est()

    def estimate(self, confidence: float = 0.95) -> WeightEstimate:
        return estimate_interval(self, confidence=confidence)


@dataclass
class ChhEntry(DwsEntry):
    f: int = 0


def prefix_variance(tau_x: float) -> float:
    """Variance of the geometric count of subkeys missed before entry."""
    if tau_x <= 0:
        raise ValueError(f"entry threshold must be positive, got {tau_x}")
    return (1.0 - tau_x) / (tau_x * tau_x)


def estimate_interval(entry: DwsEntry, tau_x: float | None = None,
                      confidence: float = 0.95) -> WeightEstimate:
    """Confidence interval on the distinct weight of a cached key.

    The lower end only trusts the counter. The upper end adds the expected
    unseen prefix ``1/tau_x - 1`` and widens by both error sources. The point
    value is the center of the upper expression.
    """
    tau_x = entry.tau_entry if tau_x is None else tau_x
    if tau_x <= 0:
        raise ValueError(f"entry threshold must be positive, got {tau_x}")
    a = coefficient_for(confidence)
    card = entry.card_est
    counter_sd = entry.counter.std_error()
    prefix_sd2 = prefix_variance(tau_x)
    point = card - 1.0 + 1.0 / tau_x
    lo = max(0.0, card - a * counter_sd)
    hi = point + a * math.sqrt(prefix_sd2 + counter_sd * counter_sd)
    return WeightEstimate(point, lo, hi, confidence)


def detection_threshold(weights: Iterable[float], k: int, tight: bool = False) -> float:
    """``max over i < k of (m - sum of the i heaviest weights) / (k - i)``.

    Keys far above this value are very likely to end up in a size-``k``
    sample. With ``tight=True`` the minimum over ``i`` is returned instead,
    which is the sharper sufficient condition (the ``i = 0`` term ``m / k``
    is always a candidate).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    w = np.sort(np.asarray(list(weights), dtype=np.float64))[::-1]
    m = w.sum()
    i = np.arange(k)
    top = np.concatenate([[0.0], np.cumsum(w)])[np.minimum(i, w.size)]
    terms = (m - top) / (k - i)
    return float(terms.min() if tight else terms.max())


class _WeightedSampler:
    """Array-backed cache shared by distinct and combined sampling."""

    _use_r = False
    _r_always = False
    _magic = _DWS_MAGIC
    _entry_cls = DwsEntry

    def __init__(self, k: int | None, ell: int = 64, hash_seed: int | None = None,
                 fixed_tau: float | None = None):
        if ell < 2:
            raise ValueError(f"ell must be >= 2, got {ell}")
        self.fixed = fixed_tau is not None
        if self.fixed:
            if not 0.0 < fixed_tau <= 1.0:
                raise ValueError(f"threshold must lie in (0, 1], got {fixed_tau}")
            k = 0
        elif k is None or k < 1:
            raise ValueError(f"cache size must be >= 1, got {k}")
        self.k = int(k)
        self.ell = int(ell)
        self.hash_seed = random_seed() if hash_seed is None else int(hash_seed)
        self.element_seed = HashSeed(self.hash_seed, Purpose.ELEMENT)
        self.bucket_seed = HashSeed(self.hash_seed, Purpose.BUCKET)

        self._keys: list[bytes] = []
        self._key_index: dict[bytes, int] = {}
        self._key_slot = np.full(16, -1, dtype=np.int64)
        self._state_i = np.zeros(3, dtype=np.int64)
        self._state_f = np.array([1.0 if fixed_tau is None else float(fixed_tau)])
        self._alloc_slots(self.k + 1 if not self.fixed else 16)

    # -- storage ----------------------------------------------------------

    def _alloc_slots(self, cap: int) -> None:
        old = getattr(self, "_slot_key", None)
        n_old = 0 if old is None else old.shape[0]
        slot_key = np.full(cap, -1, dtype=np.int64)
        c = np.ones((cap, self.ell), dtype=np.float64)
        cardest = np.zeros(cap, dtype=np.float64)
        seed = np.ones(cap, dtype=np.float64)
        tau_entry = np.ones(cap, dtype=np.float64)
        f = np.zeros(cap, dtype=np.int64)
        entered_at = np.zeros(cap, dtype=np.int64)
        if n_old:
            slot_key[:n_old] = self._slot_key
            c[:n_old] = self._c
            cardest[:n_old] = self._cardest
            seed[:n_old] = self._seed
            tau_entry[:n_old] = self._tau_entry
            f[:n_old] = self._f
            entered_at[:n_old] = self._entered_at
            free = self._free_stack[: self._state_i[kernels.FREE_TOP]]
        else:
            free = np.zeros(0, dtype=np.int64)
        # free slots are popped from the top, so keep the lowest index last
        new_free = np.arange(cap - 1, n_old - 1, -1, dtype=np.int64)
        stack = np.zeros(cap, dtype=np.int64)
        all_free = np.concatenate([new_free, free])
        stack[: all_free.size] = all_free
        self._slot_key, self._c, self._cardest = slot_key, c, cardest
        self._seed, self._tau_entry, self._f, self._entered_at = seed, tau_entry, f, entered_at
        self._free_stack = stack
        self._state_i[kernels.FREE_TOP] = all_free.size

    def _intern(self, keys: list[bytes]) -> np.ndarray:
        index = self._key_index
        out = np.empty(len(keys), dtype=np.int64)
        for i, key in enumerate(keys):
            kid = index.get(key)
            if kid is None:
                kid = index[key] = len(self._keys)
                self._keys.append(key)
            out[i] = kid
        if len(self._keys) > self._key_slot.shape[0]:
            grown = np.full(max(len(self._keys), 2 * self._key_slot.shape[0]), -1, dtype=np.int64)
            grown[: self._key_slot.shape[0]] = self._key_slot
            self._key_slot = grown
        return out

    # -- processing -------------------------------------------------------

    def _draws(self, n: int) -> np.ndarray:
        return np.empty(0)

    def _run(self, key_ids: np.ndarray, fps: np.ndarray) -> None:
        if key_ids.size == 0:
            return
        h = unit_hash_array(self.element_seed, fps)
        b = bucket_array(self.bucket_seed, fps, self.ell)
        self._run_hashed(key_ids, h, b)

    def _run_hashed(self, key_ids: np.ndarray, h: np.ndarray, b: np.ndarray,
                    r: np.ndarray | None = None) -> None:
        if r is None:
            r = self._draws(key_ids.size) if self._use_r else h
        if self.fixed:
            uniq = np.unique(key_ids)
            need = int(np.count_nonzero(self._key_slot[uniq] < 0))
            free = int(self._state_i[kernels.FREE_TOP])
            if need > free:
                self._alloc_slots(self._slot_key.shape[0] + need - free + 16)
        kernels.ws_update(
            key_ids, h, b, r, self._use_r, self.fixed, self.k, self._r_always,
            self._key_slot, self._slot_key, self._c, self._cardest, self._seed,
            self._tau_entry, self._f, self._entered_at, self._free_stack,
            self._state_i, self._state_f,
        )

    def process_stream(self, stream: EncodedStream) -> None:
        """Feed every element of an encoded stream, in order."""
        remap = self._intern(stream.keys)
        self._run(remap[stream.key_ids], stream.fps)

    def process_many(self, pairs: Iterable[tuple]) -> None:
        self.process_stream(encode_pairs(pairs))

    def process_hashed(self, keys: list, h, b, r=None) -> None:
        """Feed elements whose pair hash and bucket are given directly.

        Lets callers pin hash values, e.g. to replay a hand-worked trace.
        ``r`` overrides the per-element draws of combined sampling.
        """
        keys = [k.encode("utf-8") if isinstance(k, str) else bytes(k) for k in keys]
        h = np.asarray(h, dtype=np.float64)
        b = np.asarray(b, dtype=np.int64)
        if h.shape != (len(keys),) or b.shape != h.shape:
            raise ValueError("need one hash and one bucket per key")
        if np.any((h < 0) | (h >= 1)) or np.any((b < 0) | (b >= self.ell)):
            raise ValueError("hash values must lie in [0, 1) and buckets in [0, ell)")
        if r is not None:
            r = np.asarray(r, dtype=np.float64)
        self._run_hashed(self._intern(keys), h, b, r)

    def process(self, key, subkey) -> None:
        key = key.encode("utf-8") if isinstance(key, str) else bytes(key)
        kid = self._intern([key])
        self._run(kid, np.array([fingerprint(key, subkey)], dtype=np.uint64))

    # -- inspection -------------------------------------------------------

    @property
    def tau(self) -> float:
        return float(self._state_f[kernels.TAU])

    @property
    def n_seen(self) -> int:
        return int(self._state_i[kernels.N_SEEN])

    def __len__(self) -> int:
        return int(self._state_i[kernels.N_ENTRIES])

    def __contains__(self, key) -> bool:
        key = key.encode("utf-8") if isinstance(key, str) else bytes(key)
        kid = self._key_index.get(key)
        return kid is not None and self._key_slot[kid] >= 0

    def _occupied(self) -> np.ndarray:
        return np.flatnonzero(self._slot_key >= 0)

    def _entry_at(self, s: int) -> DwsEntry:
        ctr = DistinctCounter(self.ell, self.hash_seed)
        ctr._c[:] = self._c[s]
        ctr._cardest[0] = self._cardest[s]
        return self._entry_cls(
            key=self._keys[self._slot_key[s]],
            counter=ctr,
            seed=float(self._seed[s]),
            tau_entry=float(self._tau_entry[s]),
            entered_at=int(self._entered_at[s]),
        )

    def entry(self, key) -> DwsEntry | None:
        key = key.encode("utf-8") if isinstance(key, str) else bytes(key)
        kid = self._key_index.get(key)
        if kid is None or self._key_slot[kid] < 0:
            return None
        return self._entry_at(int(self._key_slot[kid]))

    def entries(self) -> list[DwsEntry]:
        return [self._entry_at(int(s)) for s in self._occupied()]

    def cached_keys(self) -> set[bytes]:
        return {self._keys[self._slot_key[s]] for s in self._occupied()}

    def report(self) -> list[DwsEntry]:
        """Cached keys ranked by descending distinct-count estimate."""
        return sorted(self.entries(), key=lambda e: (-e.card_est, e.key))

    def max_seed(self) -> float:
        occ = self._occupied()
        return float(self._seed[occ].max()) if occ.size else 0.0

    # -- serialization ----------------------------------------------------

    def _extra_header(self) -> bytes:
        return b""

    def _entry_extra(self, s: int) -> bytes:
        return b""

    def to_bytes(self) -> bytes:
        """Versioned binary snapshot; entries are ordered by key."""
        occ = sorted(self._occupied().tolist(), key=lambda s: self._keys[self._slot_key[s]])
        tau_or_fixed = self.tau
        parts = [
            _SKETCH_HEADER.pack(self._magic, _VERSION, int(self.fixed), self.k, self.ell,
                                self.hash_seed, tau_or_fixed, len(occ)),
            self._extra_header(),
        ]
        for s in occ:
            key = self._keys[self._slot_key[s]]
            parts.append(_ENTRY_HEADER.pack(len(key), self._seed[s], self._tau_entry[s]))
            parts.append(key)
            parts.append(self._entry_extra(s))
            parts.append(self._entry_at(s).counter.to_bytes())
        return b"".join(parts)

    @classmethod
    def _read_extra_header(cls, data: bytes, offset: int) -> tuple[dict, int]:
        return {}, offset

    def _read_entry_extra(self, data: bytes, offset: int, s: int) -> int:
        return offset

    @classmethod
    def from_bytes(cls, data: bytes):
        magic, version, fixed, k, ell, hash_seed, tau, n = _SKETCH_HEADER.unpack_from(data, 0)
        if magic != cls._magic or version != _VERSION:
            raise ValueError(f"not a {cls.__name__} record")
        offset = _SKETCH_HEADER.size
        extra, offset = cls._read_extra_header(data, offset)
        obj = cls(k=None if fixed else k, ell=ell, hash_seed=hash_seed,
                  fixed_tau=tau if fixed else None, **extra)
        if fixed and n + 1 > obj._slot_key.shape[0]:
            obj._alloc_slots(n + 16)
        obj._state_f[kernels.TAU] = tau
        for _ in range(n):
            klen, seed, tau_entry = _ENTRY_HEADER.unpack_from(data, offset)
            offset += _ENTRY_HEADER.size
            key = bytes(data[offset: offset + klen])
            offset += klen
            (kid,) = obj._intern([key])
            top = obj._state_i[kernels.FREE_TOP] - 1
            s = int(obj._free_stack[top])
            obj._state_i[kernels.FREE_TOP] = top
            offset = obj._read_entry_extra(data, offset, s)
            ctr, offset = DistinctCounter.from_bytes(data, offset)
            obj._slot_key[s] = kid
            obj._key_slot[kid] = s
            obj._c[s] = ctr._c
            obj._cardest[s] = ctr.card_est()
            obj._seed[s] = seed
            obj._tau_entry[s] = tau_entry
            obj._state_i[kernels.N_ENTRIES] += 1
        return obj

    def memory_bytes(self) -> int:
        """Bytes held by the per-entry arrays (excludes key strings)."""
        arrays = (self._slot_key, self._c, self._cardest, self._seed, self._tau_entry, self._f,
                  self._entered_at, self._free_stack)
        return int(sum(a.nbytes for a in arrays))


class DwsSketch(_WeightedSampler):
    """Fixed-size distinct weighted sampling with integrated HIP counters.

    >>> sk = DwsSketch(k=2, ell=16, hash_seed=1)
    >>> sk.process_many([("a", "1"), ("a", "2"), ("b", "1")])
    >>> sorted(sk.cached_keys())
    [b'a', b'b']
    """

    def __init__(self, k: int | None = 2000, ell: int = 64, hash_seed: int | None = None,
                 fixed_tau: float | None = None):
        super().__init__(k, ell, hash_seed, fixed_tau)


class FixedThresholdDws(DwsSketch):
    """Unbounded cache admitting keys whose pair hash falls below ``tau``."""

    def __init__(self, tau: float = 1.0, ell: int = 64, hash_seed: int | None = None,
                 k: int | None = None, fixed_tau: float | None = None):
        super().__init__(k=None, ell=ell, hash_seed=hash_seed,
                         fixed_tau=tau if fixed_tau is None else fixed_tau)


class ExactCounter:
    """Drop-in exact counter for ``GenericDwsSketch``."""

    def __init__(self):
        self._seen: set[tuple[bytes, bytes]] = set()

    def merge(self, key, subkey) -> bool:
        before = len(self._seen)
        self._seen.add((bytes(key), bytes(subkey)))
        return len(self._seen) != before

    def card_est(self) -> float:
        return float(len(self._seen))

    def std_error(self) -> float:
        return 0.0


@dataclass
class _GenericEntry:
    counter: object
    seed: float
    tau_entry: float


class GenericDwsSketch:
    """Fixed-size distinct weighted sampling over any counter.

    ``counter_factory()`` must return an object with ``merge(key, subkey)``
    and ``card_est()``. Runs in pure Python, one element at a time.
    """

    def __init__(self, k: int, counter_factory: Callable[[], object] = ExactCounter,
                 hash_seed: int | None = None):
        if k < 1:
            raise ValueError(f"cache size must be >= 1, got {k}")
        self.k = k
        self.counter_factory = counter_factory
        self.hash_seed = random_seed() if hash_seed is None else int(hash_seed)
        self.element_seed = HashSeed(self.hash_seed, Purpose.ELEMENT)
        self.tau = 1.0
        self.cache: dict[bytes, _GenericEntry] = {}

    def process_hashed(self, keys: list, h, b, r=None) -> None:
        """Feed elements whose pair hash and bucket are given directly.

        Lets callers pin hash values, e.g. to replay a hand-worked trace.
        ``r`` overrides the per-element draws of combined sampling.
        """
        keys = [k.encode("utf-8") if isinstance(k, str) else bytes(k) for k in keys]
        h = np.asarray(h, dtype=np.float64)
        b = np.asarray(b, dtype=np.int64)
        if h.shape != (len(keys),) or b.shape != h.shape:
            raise ValueError("need one hash and one bucket per key")
        if np.any((h < 0) | (h >= 1)) or np.any((b < 0) | (b >= self.ell)):
            raise ValueError("hash values must lie in [0, 1) and buckets in [0, ell)")
        if r is not None:
            r = np.asarray(r, dtype=np.float64)
        self._run_hashed(self._intern(keys), h, b, r)

    def process(self, key, subkey) -> None:
        key = key.encode("utf-8") if isinstance(key, str) else bytes(key)
        subkey = subkey.encode("utf-8") if isinstance(subkey, str) else bytes(subkey)
        h = unit_hash(self.element_seed, key, subkey)
        entry = self.cache.get(key)
        if entry is not None:
            entry.counter.merge(key, subkey)
            entry.seed = min(entry.seed, h)
        elif h < self.tau:
            ctr = self.counter_factory()
            ctr.merge(key, subkey)
            self.cache[key] = _GenericEntry(ctr, h, self.tau)
            if len(self.cache) > self.k:
                victim = max(self.cache, key=lambda x: (self.cache[x].seed, x))
                self.tau = self.cache.pop(victim).seed

    def process_many(self, pairs: Iterable[tuple]) -> None:
        for key, subkey in pairs:
            self.process(key, subkey)

    def cached_keys(self) -> set[bytes]:
        return set(self.cache)

    def report(self) -> list[tuple[bytes, float, float]]:
        rows = [(x, e.counter.card_est(), e.tau_entry) for x, e in self.cache.items()]
        return sorted(rows, key=lambda r: (-r[1], r[0]))
