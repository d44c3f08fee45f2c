"""Classic (non-distinct) heavy hitters: Sample-and-Hold and Space-Saving.

Sample-and-Hold is the baseline the distinct schemes generalize and serves
as an oracle in tests: its fixed-size cache is a ppswor sample by element
count. Space-Saving backs the subkey whitelist in the DNS pipeline.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Hashable, Iterable, TextIO

import numpy as np

from .hashing import HashSeed, Purpose, random_seed


@dataclass
class ShEntry:
    count: int
    seed: float = 0.0


class ShCache:
    """Sample-and-Hold over keys.

    Pass ``tau`` for the fixed-threshold variant or ``k`` for the fixed-size
    one. In fixed-size mode every element draws a fresh uniform; a key's
    seed is the smallest draw since it was cached, the ``k`` keys with the
    lowest seeds are kept, and the threshold drops to each evicted seed.
    """

    def __init__(self, tau: float | None = None, k: int | None = None, seed: int | None = None):
        if (tau is None) == (k is None):
            raise ValueError("give exactly one of tau or k")
        if tau is not None and not 0.0 < tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {tau}")
        if k is not None and k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.tau = 1.0 if tau is None else float(tau)
        base = random_seed() if seed is None else int(seed)
        self._rng = np.random.default_rng(HashSeed(base, Purpose.SH_COIN).derived)
        self._buf = np.empty(0)
        self._pos = 0
        self.entries: dict[Hashable, ShEntry] = {}

    def _coin(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._rng.random(4096)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def process(self, key: Hashable) -> None:
        u = self._coin()
        entry = self.entries.get(key)
        if entry is not None:
            entry.count += 1
            if u < entry.seed:
                entry.seed = u
            return
        if u >= self.tau:
            return
        self.entries[key] = ShEntry(1, u)
        if self.k is not None and len(self.entries) > self.k:
            victim = max(self.entries, key=lambda x: self.entries[x].seed)
            self.tau = self.entries.pop(victim).seed

    def process_many(self, keys: Iterable[Hashable]) -> None:
        for key in keys:
            self.process(key)

    def estimate(self, key: Hashable) -> float:
        """Unbiased count estimate ``c - 1 + 1/tau`` (0 when uncached).

        Uses the current threshold, which for the fixed-size variant is the
        effective one.
        """
        entry = self.entries.get(key)
        return 0.0 if entry is None else entry.count - 1 + 1 / self.tau

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class SpaceSavingCache:
    """Space-Saving with ``capacity`` counters.

    Each counter stores an upper bound on the true frequency and the error
    it inherited when it replaced the minimum, so
    ``count - bound <= true <= count``.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.counts: dict[Hashable, int] = {}
        self.bounds: dict[Hashable, int] = {}
        self.total = 0
        # lazy min-heap of (count, tiebreak, key); stale rows are skipped
        self._heap: list = []
        self._tick = 0

    def _push(self, key) -> None:
        self._tick += 1
        heapq.heappush(self._heap, (self.counts[key], self._tick, key))
        if len(self._heap) > 4 * self.capacity + 64:
            self._heap = [(c, t, k) for c, t, k in self._heap if self.counts.get(k) == c]
            heapq.heapify(self._heap)

    def _pop_min(self):
        while True:
            count, _, key = heapq.heappop(self._heap)
            if self.counts.get(key) == count:
                return key, count

    def process(self, key: Hashable) -> None:
        self.total += 1
        if key in self.counts:
            self.counts[key] += 1
        elif len(self.counts) < self.capacity:
            self.counts[key] = 1
            self.bounds[key] = 0
        else:
            victim, floor = self._pop_min()
            del self.counts[victim], self.bounds[victim]
            self.counts[key] = floor + 1
            self.bounds[key] = floor
        self._push(key)

    def process_many(self, keys: Iterable[Hashable]) -> None:
        for key in keys:
            self.process(key)

    def top(self, min_count: float = 1) -> list[tuple[Hashable, int, int]]:
        """Entries with ``count >= min_count``, most frequent first."""
        rows = [(k, c, self.bounds[k]) for k, c in self.counts.items() if c >= min_count]
        rows.sort(key=lambda r: (-r[1], str(r[0])))
        return rows

    def __contains__(self, key) -> bool:
        return key in self.counts

    def __len__(self) -> int:
        return len(self.counts)


def write_whitelist_counts(fh: TextIO, rows: Iterable[tuple]) -> None:
    for key, count, *_ in rows:
        text = key.decode("utf-8") if isinstance(key, bytes) else str(key)
        fh.write(f"{text}\t{count}\n")
