"""Streaming heavy-hitter detection by distinct and combined weight."""

from .classic import ShCache, SpaceSavingCache
from .counter import DistinctCounter
from .cws import ChhSketch, combined_estimate
from .dns import (AttackState, PeacetimeState, Signature, Whitelist, ZoneSplit, build_whitelists,
                  parse_query, signatures)
from .dws import (DwsSketch, FixedThresholdDws, GenericDwsSketch, WeightEstimate,
                  detection_threshold, estimate_interval)
from .evaluation import OracleTable, evaluate, exact_oracle, stream_oracle
from .hashing import HashSeed, Purpose, fingerprint, unit_hash
from .stream import EncodedStream, encode_pairs

__version__ = "0.1.0"

__all__ = [
    "AttackState", "ChhSketch", "DistinctCounter", "DwsSketch", "EncodedStream",
    "FixedThresholdDws", "GenericDwsSketch", "HashSeed", "OracleTable", "PeacetimeState",
    "Purpose", "ShCache", "Signature", "SpaceSavingCache", "WeightEstimate", "Whitelist",
    "ZoneSplit", "build_whitelists", "combined_estimate", "detection_threshold",
    "encode_pairs", "estimate_interval", "evaluate", "exact_oracle", "fingerprint",
    "parse_query", "signatures", "stream_oracle", "unit_hash",
]
