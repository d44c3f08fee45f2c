"""Line-delimited JSON reports of sketch contents."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, TextIO

from .cws import ChhSketch, combined_estimate
from .dws import _WeightedSampler, estimate_interval


@dataclass
class ReportRow:
    key: str
    cardest: float
    lo: float
    hi: float
    tau_entry: float
    point: float
    seed: float
    f: int | None = None
    combined: float | None = None


def _text(key: bytes) -> str:
    return key.decode("utf-8", errors="backslashreplace")


def sketch_rows(sketch: _WeightedSampler, confidence: float = 0.95) -> list[ReportRow]:
    """Report rows in ranking order; combined sketches report combined intervals."""
    rows = []
    for e in sketch.report():
        if isinstance(sketch, ChhSketch):
            est = combined_estimate(e, sketch.rho, confidence)
            rows.append(ReportRow(_text(e.key), e.card_est, est.lo, est.hi, e.tau_entry,
                                  est.point, e.seed, e.f, est.point))
        else:
            est = estimate_interval(e, confidence=confidence)
            rows.append(ReportRow(_text(e.key), e.card_est, est.lo, est.hi, e.tau_entry,
                                  est.point, e.seed))
    return rows


def sketch_header(sketch: _WeightedSampler, algo: str, confidence: float, **extra) -> dict:
    head = {
        "type": "header",
        "algo": algo,
        "k": sketch.k,
        "ell": sketch.ell,
        "hash_seed": sketch.hash_seed,
        "tau": sketch.tau,
        "entries": len(sketch),
        "elements": sketch.n_seen,
        "confidence": confidence,
    }
    if isinstance(sketch, ChhSketch):
        head["rho"] = sketch.rho
        head["seed_every_element"] = sketch.seed_every_element
    head.update(extra)
    return head


def write_report(fh: TextIO, header: dict, rows: Iterable[ReportRow]) -> None:
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for row in rows:
        rec = {"type": "entry", **{k: v for k, v in asdict(row).items() if v is not None}}
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_report(fh: TextIO) -> tuple[dict, list[ReportRow]]:
    header: dict = {}
    rows = []
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("type", "entry")
        if kind == "header":
            header = rec
        elif kind == "entry":
            rows.append(ReportRow(**rec))
    if not header:
        raise ValueError("report has no header record")
    return header, rows
