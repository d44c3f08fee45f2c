"""Exact counts and sketch-versus-truth scoring."""

from __future__ import annotations

import csv
import json
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .dws import coefficient_for
from .report import ReportRow
from .stream import EncodedStream


@dataclass
class OracleTable:
    keys: list[str]
    h: np.ndarray
    w: np.ndarray
    rho: float = 0.1

    @property
    def b(self) -> np.ndarray:
        return self.rho * self.h + self.w

    def __len__(self) -> int:
        return len(self.keys)

    def as_dict(self) -> dict[str, tuple[int, int, float]]:
        b = self.b
        return {k: (int(self.h[i]), int(self.w[i]), float(b[i])) for i, k in enumerate(self.keys)}

    def write(self, fh: TextIO) -> None:
        fh.write("# key\th\tw\tb\n")
        b = self.b
        for i in np.argsort(-self.w, kind="stable"):
            fh.write(f"{self.keys[i]}\t{int(self.h[i])}\t{int(self.w[i])}\t{b[i]:.6g}\n")

    @classmethod
    def read(cls, fh: TextIO, rho: float = 0.1) -> "OracleTable":
        keys, h, w = [], [], []
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            keys.append(parts[0])
            h.append(int(parts[1]))
            w.append(int(parts[2]))
        return cls(keys, np.asarray(h, dtype=np.int64), np.asarray(w, dtype=np.int64), rho)


def exact_oracle(pairs: Iterable[tuple], rho: float = 0.1) -> OracleTable:
    """Count h_x and w_x by holding every distinct pair in memory."""
    h: Counter = Counter()
    subs: dict = defaultdict(set)
    for key, subkey in pairs:
        h[key] += 1
        subs[key].add(subkey)
    keys = list(h)
    text = [k.decode("utf-8", errors="backslashreplace") if isinstance(k, bytes) else str(k) for k in keys]
    return OracleTable(text, np.array([h[k] for k in keys], dtype=np.int64),
                       np.array([len(subs[k]) for k in keys], dtype=np.int64), rho)


def stream_oracle(stream: EncodedStream, rho: float = 0.1) -> OracleTable:
    """Exact counts from an encoded stream's pair table."""
    n = len(stream.keys)
    h = np.bincount(stream.key_ids, minlength=n)
    used = np.zeros(stream.n_distinct_pairs, dtype=bool)
    used[stream.pair_ids] = True
    w = np.bincount(stream.pair_key[used], minlength=n)
    present = h > 0
    keys = [k.decode("utf-8", errors="backslashreplace") for k in stream.keys]
    idx = np.flatnonzero(present)
    return OracleTable([keys[i] for i in idx], h[idx], w[idx], rho)


@dataclass
class KeyRow:
    key: str
    true_h: int
    true_w: int
    true_b: float
    cached: bool
    cardest: float = math.nan
    estimate: float = math.nan
    lo: float = math.nan
    hi: float = math.nan
    detected: bool = False
    fp: bool = False
    fn: bool = False


@dataclass
class EvalReport:
    rows: list[KeyRow]
    threshold: float
    weight: str
    k: int
    ell: int
    confidence: float
    aggregates: dict = field(default_factory=dict)
    rule: str = ""

    def write_table(self, fh: TextIO, top: int = 20) -> None:
        a = self.aggregates
        fh.write(f"threshold t = {self.threshold:.3f} ({self.weight} weight, k={self.k})\n")
        fh.write(f"rule: {self.rule}\n")
        for name in ("cached", "detected", "fp", "fn", "cardest_err_mean", "cardest_err_median",
                     "estimate_err_mean", "estimate_err_median", "coverage_heavy",
                     "overestimates", "over_beyond_interval"):
            fh.write(f"{name:>22}: {a.get(name)}\n")
        fh.write(f"{'key':<24}{'true_w':>8}{'true_h':>9}{'cardest':>10}{'lo':>10}{'hi':>10} flags\n")
        ranked = sorted(self.rows, key=lambda r: -(r.true_w if self.weight == "distinct" else r.true_b))
        for r in ranked[:top]:
            flags = ",".join(n for n, v in (("cached", r.cached), ("detected", r.detected),
                                            ("FP", r.fp), ("FN", r.fn)) if v)
            fh.write(f"{r.key:<24}{r.true_w:>8}{r.true_h:>9}{r.cardest:>10.1f}{r.lo:>10.1f}"
                     f"{r.hi:>10.1f} {flags}\n")

    def write_jsonl(self, fh: TextIO) -> None:
        head = {"type": "summary", "threshold": self.threshold, "weight": self.weight, "k": self.k,
                "ell": self.ell, "confidence": self.confidence, "rule": self.rule, **self.aggregates}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for r in self.rows:
            rec = {"type": "key", **asdict(r)}
            fh.write(json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                                 for k, v in rec.items()}, sort_keys=True) + "\n")

    def write_csv(self, fh: TextIO) -> None:
        out = csv.writer(fh)
        out.writerow(["key", "true_w", "estimate", "lo", "hi", "cached"])
        for r in self.rows:
            out.writerow([r.key, r.true_w, r.estimate, r.lo, r.hi, int(r.cached)])


def evaluate(rows: list[ReportRow], oracle: OracleTable, k: int, ell: int,
             confidence: float = 0.95, weight: str = "distinct") -> EvalReport:
    """Score a sketch report against exact counts.

    The threshold is ``t = total weight / k``. A cached key counts as
    detected when its estimate reaches ``t`` (distinct counter value for
    distinct weight, combined point for combined weight). Misses and false
    alarms only count when their distance from ``t`` exceeds ``a`` counter
    standard errors.
    """
    if weight not in ("distinct", "combined"):
        raise ValueError(f"unknown weight {weight!r}")
    truth = oracle.as_dict()
    unknown = [r.key for r in rows if r.key not in truth]
    if unknown:
        raise ValueError(f"{len(unknown)} reported keys are absent from the oracle, e.g. {unknown[0]!r}")
    a = coefficient_for(confidence)
    total = float(oracle.w.sum() if weight == "distinct" else oracle.b.sum())
    t = total / k
    root = math.sqrt(2 * ell)
    reported = {r.key: r for r in rows}

    out: list[KeyRow] = []
    for key, (h, w, b) in truth.items():
        true = w if weight == "distinct" else b
        r = reported.get(key)
        if r is None:
            fn = true > t and (true - t) > a * true / root
            out.append(KeyRow(key, h, w, b, False, fn=fn))
            continue
        score = r.cardest if weight == "distinct" else r.point
        detected = score >= t
        fp = detected and true < t and (t - true) > a * r.cardest / root
        out.append(KeyRow(key, h, w, b, True, r.cardest, r.point, r.lo, r.hi, detected, fp=fp))

    out.sort(key=lambda r: (-r.true_w, -r.true_h, r.key))
    cached = [r for r in out if r.cached]
    truth_of = (lambda r: r.true_w) if weight == "distinct" else (lambda r: r.true_b)
    card_err = [abs(r.cardest - r.true_w) for r in cached]
    est_err = [abs(r.estimate - truth_of(r)) for r in cached]
    heavy = [r for r in cached if truth_of(r) > t]
    covered = [r for r in heavy if r.lo <= truth_of(r) <= r.hi]
    agg = {
        "keys": len(out),
        "cached": len(cached),
        "detected": sum(r.detected for r in out),
        "fp": sum(r.fp for r in out),
        "fn": sum(r.fn for r in out),
        "cardest_err_mean": statistics.fmean(card_err) if card_err else 0.0,
        "cardest_err_median": statistics.median(card_err) if card_err else 0.0,
        "estimate_err_mean": statistics.fmean(est_err) if est_err else 0.0,
        "estimate_err_median": statistics.median(est_err) if est_err else 0.0,
        "heavy_cached": len(heavy),
        "coverage_heavy": len(covered) / len(heavy) if heavy else 1.0,
        "overestimates": sum(r.cardest > r.true_w for r in cached),
        "over_beyond_interval": sum(truth_of(r) < r.lo for r in cached),
    }
    rule = (f"FN: uncached, true > t and true - t > {a:g}*true/sqrt(2*ell); "
            f"FP: estimate >= t, true < t and t - true > {a:g}*cardest/sqrt(2*ell)")
    return EvalReport(out, t, weight, k, ell, confidence, agg, rule)
