"""Encoded (key, subkey) streams and text trace I/O.

A stream is held as integer arrays: a key id and a distinct-pair id per
element, plus per-pair tables with the owning key and the pair fingerprint.
Sketches hash the fingerprints with their own seeds, so a stream is encoded
once and replayed under any number of seeds.
"""

from __future__ import annotations

import gzip
import io
import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

from .hashing import fingerprint

PAIRS_HEADER = "# format: pairs"


def _b(s) -> bytes:
    return s.encode("utf-8") if isinstance(s, str) else bytes(s)


@dataclass
class EncodedStream:
    keys: list[bytes]
    key_ids: np.ndarray
    pair_ids: np.ndarray
    pair_key: np.ndarray
    pair_fp: np.ndarray
    subkeys: list[bytes] | None = None
    _fps: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.key_ids.shape[0])

    @property
    def fps(self) -> np.ndarray:
        if self._fps is None:
            self._fps = self.pair_fp[self.pair_ids]
        return self._fps

    @property
    def n_distinct_pairs(self) -> int:
        return int(self.pair_key.shape[0])

    def __getitem__(self, sl: slice) -> "EncodedStream":
        return EncodedStream(self.keys, self.key_ids[sl], self.pair_ids[sl],
                             self.pair_key, self.pair_fp, self.subkeys)

    def repeat_each(self, times: int) -> "EncodedStream":
        """Every element replayed ``times`` times in place."""
        return EncodedStream(self.keys, np.repeat(self.key_ids, times), np.repeat(self.pair_ids, times),
                             self.pair_key, self.pair_fp, self.subkeys)

    def permuted(self, order: np.ndarray) -> "EncodedStream":
        return EncodedStream(self.keys, self.key_ids[order], self.pair_ids[order],
                             self.pair_key, self.pair_fp, self.subkeys)

    def pairs(self) -> Iterator[tuple[bytes, bytes]]:
        if self.subkeys is None:
            raise ValueError("stream was encoded without subkey strings")
        for p in self.pair_ids.tolist():
            yield self.keys[self.pair_key[p]], self.subkeys[p]


class StreamEncoder:
    """Incrementally interns keys and distinct pairs."""

    def __init__(self):
        self.keys: list[bytes] = []
        self.subkeys: list[bytes] = []
        self._key_index: dict[bytes, int] = {}
        self._pair_index: dict[tuple[int, bytes], int] = {}
        self._pair_key: list[int] = []
        self._pair_fp: list[int] = []
        self._key_ids: list[int] = []
        self._pair_ids: list[int] = []

    def add(self, key, subkey) -> int:
        """Append one element; returns its pair id."""
        key = _b(key)
        subkey = _b(subkey)
        kid = self._key_index.get(key)
        if kid is None:
            if not key:
                raise ValueError("key must be non-empty")
            kid = self._key_index[key] = len(self.keys)
            self.keys.append(key)
        pid = self._pair_index.get((kid, subkey))
        if pid is None:
            pid = self._pair_index[(kid, subkey)] = len(self._pair_key)
            self._pair_key.append(kid)
            self._pair_fp.append(fingerprint(key, subkey))
            self.subkeys.append(subkey)
        self._key_ids.append(kid)
        self._pair_ids.append(pid)
        return pid

    def extend(self, pairs: Iterable[tuple]) -> None:
        for key, subkey in pairs:
            self.add(key, subkey)

    def build(self) -> EncodedStream:
        return EncodedStream(
            keys=self.keys,
            key_ids=np.asarray(self._key_ids, dtype=np.int64),
            pair_ids=np.asarray(self._pair_ids, dtype=np.int64),
            pair_key=np.asarray(self._pair_key, dtype=np.int64),
            pair_fp=np.asarray(self._pair_fp, dtype=np.uint64),
            subkeys=self.subkeys,
        )


def encode_pairs(pairs: Iterable[tuple]) -> EncodedStream:
    enc = StreamEncoder()
    enc.extend(pairs)
    return enc.build()


def encode_ids(key_names: list, subkey_name, key_ids: np.ndarray, subkey_ids: np.ndarray) -> EncodedStream:
    """Encode a stream given as integer (key, subkey) ids.

    ``subkey_name(key_id, subkey_id)`` renders a subkey; it is only called
    once per distinct pair.
    """
    key_ids = np.asarray(key_ids, dtype=np.int64)
    subkey_ids = np.asarray(subkey_ids, dtype=np.int64)
    codes = np.stack([key_ids, subkey_ids], axis=1)
    uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
    keys = [_b(k) for k in key_names]
    subkeys = [_b(subkey_name(int(k), int(s))) for k, s in uniq.tolist()]
    fps = np.fromiter((fingerprint(keys[k], sk) for (k, _), sk in zip(uniq.tolist(), subkeys)),
                      dtype=np.uint64, count=len(subkeys))
    return EncodedStream(
        keys=keys,
        key_ids=key_ids,
        pair_ids=inverse.reshape(-1).astype(np.int64),
        pair_key=uniq[:, 0].astype(np.int64),
        pair_fp=fps,
        subkeys=subkeys,
    )


# -- text traces ------------------------------------------------------------

def open_text(path, mode: str = "r") -> TextIO:
    """Open a trace file; ``-`` is stdin/stdout and ``.gz`` is decompressed."""
    if str(path) == "-":
        return sys.stdin if "r" in mode else sys.stdout
    if str(path).endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, mode.replace("t", "") + "b"), encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def peek_lines(fh: TextIO) -> tuple[list[str], Iterator[str]]:
    """Read the leading comment lines so the format can be sniffed."""
    head = []
    for line in fh:
        head.append(line)
        if not line.startswith("#"):
            break
    rest = iter(fh)

    def chain():
        yield from head
        yield from rest

    return head, chain()


def read_pair_lines(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    for line in lines:
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) < 2:
            yield parts[0], ""
        else:
            yield parts[0], parts[1]


def write_pair_trace(fh: TextIO, stream: EncodedStream) -> None:
    fh.write(PAIRS_HEADER + "\n")
    keys = [k.decode("utf-8") for k in stream.keys]
    subs = [s.decode("utf-8") for s in stream.subkeys]
    pair_key = stream.pair_key.tolist()
    out = []
    for p in stream.pair_ids.tolist():
        out.append(f"{keys[pair_key[p]]}\t{subs[p]}\n")
        if len(out) >= 65536:
            fh.write("".join(out))
            out.clear()
    fh.write("".join(out))
