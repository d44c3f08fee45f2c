"""Random-subdomain DDoS detection on DNS query logs.

Queries are split into a zone key (the last ``zone_depth`` labels) and a
subkey (the prefix). Peacetime traffic feeds a combined-weight sketch of
zones and a Space-Saving counter of subkeys; their heavy entries become the
zone and subkey whitelists. At attack time, queries with a whitelisted
subkey or zone bypass the sketch, everything else is sketched, and zones
whose distinct-subkey count clears the threshold are emitted as
signatures.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

from .classic import SpaceSavingCache
from .counter import DistinctCounter
from .cws import ChhSketch, combined_estimate
from .dws import estimate_interval
from .hashing import random_seed
from .stream import StreamEncoder

BLOCK_RULE = "block queries to zone unless subkey is in the subkey whitelist"


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class DnsQueryRecord:
    qname: str
    qtype: str = "A"
    timestamp: float | None = None


@dataclass(frozen=True)
class ZoneSplit:
    key: str
    subkey: str


def normalize_qname(qname: str) -> list[str]:
    name = qname.strip().rstrip(".").lower()
    if not name:
        raise ParseError("empty query name")
    labels = name.split(".")
    if "" in labels:
        raise ParseError(f"empty label in {qname!r}")
    if len(name.split(None, 1)) > 1:
        raise ParseError(f"whitespace in {qname!r}")
    return labels


def parse_query(qname: str, zone_depth: int = 2, subkey_mode: str = "full") -> ZoneSplit:
    """Split a query name into zone and subkey.

    >>> parse_query("bjsufyd.www.google.com", 2)
    ZoneSplit(key='google.com', subkey='bjsufyd.www')
    >>> parse_query("bjsufyd.www.google.com", 2, subkey_mode="leftmost")
    ZoneSplit(key='google.com', subkey='bjsufyd')
    """
    if zone_depth < 1:
        raise ValueError(f"zone_depth must be >= 1, got {zone_depth}")
    labels = normalize_qname(qname)
    key = ".".join(labels[-zone_depth:])
    prefix = labels[:-zone_depth]
    if subkey_mode == "full":
        subkey = ".".join(prefix)
    elif subkey_mode == "leftmost":
        subkey = prefix[0] if prefix else ""
    else:
        raise ValueError(f"unknown subkey mode {subkey_mode!r}")
    return ZoneSplit(key, subkey)


def read_dns_trace(lines: Iterable[str], diagnostics: dict | None = None) -> Iterator[DnsQueryRecord]:
    """Records from ``epoch<TAB>qname<TAB>qtype`` lines; ``#`` lines are skipped."""
    for line in lines:
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        try:
            if len(parts) == 1:
                yield DnsQueryRecord(parts[0])
            else:
                ts = float(parts[0]) if parts[0] else None
                qtype = parts[2] if len(parts) > 2 else "A"
                yield DnsQueryRecord(parts[1], qtype, ts)
        except ValueError:
            if diagnostics is not None:
                diagnostics["malformed_lines"] = diagnostics.get("malformed_lines", 0) + 1


def write_dns_trace(fh: TextIO, records: Iterable) -> None:
    for rec in records:
        if isinstance(rec, DnsQueryRecord):
            ts, qname, qtype = rec.timestamp, rec.qname, rec.qtype
        else:
            ts, qname, qtype = rec
        fh.write(f"{'' if ts is None else f'{ts:.3f}'}\t{qname}\t{qtype}\n")


@dataclass
class Whitelist:
    zones: set[str] = field(default_factory=set)
    subkeys: set[str] = field(default_factory=set)
    zone_counts: dict[str, float] = field(default_factory=dict)
    subkey_counts: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.zones = {z.lower() for z in self.zones}
        self.subkeys = {s.lower() for s in self.subkeys}

    def write(self, fh: TextIO) -> None:
        fh.write("[zones]\n")
        for z in sorted(self.zones):
            c = self.zone_counts.get(z)
            fh.write(f"{z}\t{c:.1f}\n" if c is not None else f"{z}\n")
        fh.write("[subkeys]\n")
        for s in sorted(self.subkeys):
            c = self.subkey_counts.get(s)
            # the apex subkey is an empty field; the tab keeps its line non-blank
            if c is not None:
                fh.write(f"{s}\t{int(c)}\n")
            else:
                fh.write(f"{s}\n" if s else "\t\n")

    @classmethod
    def read(cls, fh: TextIO) -> "Whitelist":
        wl = cls()
        section = None
        for raw in fh:
            line = raw.rstrip("\r\n")
            if line.startswith("#"):
                continue
            if line.strip() in ("[zones]", "[subkeys]"):
                section = line.strip()[1:-1]
                continue
            if not line or (not line.strip() and section != "subkeys"):
                continue
            name, _, count = line.partition("\t")
            name = name.strip().lower()
            if section == "zones":
                wl.zones.add(name)
                if count:
                    wl.zone_counts[name] = float(count)
            elif section == "subkeys":
                wl.subkeys.add(name)
                if count:
                    wl.subkey_counts[name] = float(count)
            else:
                raise ValueError(f"whitelist entry outside a section: {line!r}")
        return wl


@dataclass
class Signature:
    zone: str
    estimated_distinct: float
    estimated_combined: float
    lo: float
    hi: float
    confidence: float
    rule: str = BLOCK_RULE


class _Phase:
    def __init__(self, k: int, ell: int, rho: float, hash_seed: int | None,
                 zone_depth: int, subkey_mode: str):
        self.hash_seed = random_seed() if hash_seed is None else int(hash_seed)
        self.k, self.ell, self.rho = k, ell, rho
        self.zone_depth = zone_depth
        self.subkey_mode = subkey_mode
        self.sketch = ChhSketch(k=k, ell=ell, rho=rho, hash_seed=self.hash_seed)
        self.pairs = DistinctCounter(ell, self.hash_seed)
        self.total_queries = 0
        self.parse_errors = 0

    def _split(self, rec) -> ZoneSplit | None:
        qname = rec.qname if isinstance(rec, DnsQueryRecord) else rec
        try:
            return parse_query(qname, self.zone_depth, self.subkey_mode)
        except ParseError:
            self.parse_errors += 1
            return None

    def _sketch(self, splits: list[ZoneSplit]) -> None:
        enc = StreamEncoder()
        for sp in splits:
            enc.add(sp.key, sp.subkey)
        stream = enc.build()
        self.sketch.process_stream(stream)
        self.pairs.merge_fingerprints(stream.fps)

    def distinct_pairs_estimate(self) -> float:
        return self.pairs.card_est()


class PeacetimeState(_Phase):
    """Learns zone and subkey whitelists from attack-free traffic."""

    def __init__(self, k: int = 50, ell: int = 256, rho: float = 0.1, hash_seed: int | None = None,
                 zone_depth: int = 2, subkey_mode: str = "full", ss_capacity: int = 1024):
        super().__init__(k, ell, rho, hash_seed, zone_depth, subkey_mode)
        self.subkeys = SpaceSavingCache(ss_capacity)

    def process(self, query) -> None:
        self.process_records([query])

    def process_records(self, records: Iterable) -> None:
        splits = []
        for rec in records:
            self.total_queries += 1
            sp = self._split(rec)
            if sp is None:
                continue
            splits.append(sp)
            self.subkeys.process(sp.subkey)
        self._sketch(splits)

    def default_zone_threshold(self) -> float:
        return 10.0 * self.distinct_pairs_estimate() / self.k

    def default_subkey_fraction(self) -> float:
        return 0.001


def build_whitelists(state: PeacetimeState, zone_min_combined: float | None = None,
                     subkey_min_freq: float | None = None) -> Whitelist:
    """Zones whose combined estimate reaches ``zone_min_combined`` and
    subkeys seen in at least ``subkey_min_freq`` of peacetime queries."""
    if (zone_min_combined is not None and zone_min_combined <= 0) or \
            (subkey_min_freq is not None and subkey_min_freq <= 0):
        raise ValueError("whitelist thresholds must be positive")
    wl = Whitelist()
    if state.total_queries == 0:
        return wl
    if zone_min_combined is None:
        zone_min_combined = state.default_zone_threshold()
    if subkey_min_freq is None:
        subkey_min_freq = state.default_subkey_fraction()
    for e in state.sketch.report():
        est = combined_estimate(e, state.rho)
        if est.point >= zone_min_combined:
            zone = e.key.decode()
            wl.zones.add(zone)
            wl.zone_counts[zone] = est.point
    for sub, count, _ in state.subkeys.top(subkey_min_freq * state.total_queries):
        wl.subkeys.add(sub)
        wl.subkey_counts[sub] = count
    return wl


class AttackState(_Phase):
    """One attack-time window. Start a new window with ``reset()``."""

    def __init__(self, whitelist: Whitelist | None = None, k: int = 50, ell: int = 256,
                 rho: float = 0.1, hash_seed: int | None = None, zone_depth: int = 2,
                 subkey_mode: str = "full"):
        super().__init__(k, ell, rho, hash_seed, zone_depth, subkey_mode)
        self.whitelist = whitelist or Whitelist()
        self.passed_subkey = 0
        self.passed_zone = 0

    def reset(self) -> None:
        self.__init__(self.whitelist, self.k, self.ell, self.rho, self.hash_seed,
                      self.zone_depth, self.subkey_mode)

    def process(self, query) -> int:
        return int(self.process_records([query])[0])

    def process_records(self, records: Iterable) -> np.ndarray:
        """Feed a batch; returns each record's sketch element index, or -1
        when it was whitelisted or unparseable."""
        splits = []
        index = []
        base = self.sketch.n_seen
        for rec in records:
            self.total_queries += 1
            sp = self._split(rec)
            if sp is None:
                index.append(-1)
            elif sp.subkey in self.whitelist.subkeys:
                self.passed_subkey += 1
                index.append(-1)
            elif sp.key in self.whitelist.zones:
                self.passed_zone += 1
                index.append(-1)
            else:
                index.append(base + len(splits))
                splits.append(sp)
        self._sketch(splits)
        return np.asarray(index, dtype=np.int64)

    def default_distinct_threshold(self) -> float:
        return self.distinct_pairs_estimate() / self.k


def signatures(state: AttackState, min_distinct_estimate: float | None = None,
               confidence: float = 0.95) -> list[Signature]:
    """Zones whose distinct-subkey counter reaches the threshold.

    Selection uses the counter value rather than the prefix-corrected point,
    because a zone cached late carries a large ``1/tau`` correction whatever
    its traffic.
    """
    if min_distinct_estimate is None:
        min_distinct_estimate = state.default_distinct_threshold()
    out = []
    for e in state.sketch.report():
        zone = e.key.decode()
        if zone in state.whitelist.zones or e.card_est < min_distinct_estimate:
            continue
        d = estimate_interval(e, confidence=confidence)
        c = combined_estimate(e, state.rho, confidence)
        out.append(Signature(zone, e.card_est, c.point, d.lo, d.hi, confidence))
    out.sort(key=lambda s: (-s.estimated_distinct, s.zone))
    return out


def write_signatures(fh: TextIO, sigs: list[Signature], state: AttackState,
                     min_distinct_estimate: float) -> None:
    header = {
        "type": "header",
        "hash_seed": state.hash_seed,
        "k": state.k,
        "ell": state.ell,
        "rho": state.rho,
        "zone_depth": state.zone_depth,
        "min_distinct_estimate": min_distinct_estimate,
        "queries": state.total_queries,
        "passed_subkey_whitelist": state.passed_subkey,
        "passed_zone_whitelist": state.passed_zone,
        "parse_errors": state.parse_errors,
        "signatures": len(sigs),
    }
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for s in sigs:
        fh.write(json.dumps({"type": "signature", **asdict(s)}, sort_keys=True) + "\n")
