"""Synthetic workloads.

``generate_pairs`` builds a (key, subkey) stream shaped like a packet trace
keyed by destination with source subkeys: a Zipf-popular background with
heavy repetition of pairs, plus injected keys that get an exact number of
unique subkeys. ``generate_dns_capture`` builds a DNS query log with
ordinary zone traffic, disposable-domain zones and optional
random-subdomain attacks.
"""

from __future__ import annotations

import string
from dataclasses import asdict, dataclass, field

import numpy as np

from .hashing import fingerprint
from .stream import EncodedStream

_IP_BASE_BG = 10 << 24
_IP_BASE_INJ = 172 << 24 | 16 << 16


def _ip(n: int) -> str:
    return f"{(n >> 24) & 255}.{(n >> 16) & 255}.{(n >> 8) & 255}.{n & 255}"


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return w / w.sum()


@dataclass
class InjectedKey:
    cardinality: int
    repetitions: int = 1
    name: str | None = None

    def __post_init__(self):
        if self.cardinality < 1 or self.repetitions < 1:
            raise ValueError("injected keys need cardinality and repetitions >= 1")


@dataclass
class SyntheticConfig:
    """Stream shape. The defaults mirror a ~1M-pair CAIDA-like slice."""

    num_keys: int = 33_973
    skew: float = 1.0
    pairs_total: int = 990_000
    distinct_pairs: int = 49_109
    injected: list[InjectedKey] = field(default_factory=lambda: [
        InjectedKey(2000), InjectedKey(1000), InjectedKey(500), InjectedKey(250)])
    rng_seed: int = 0

    def validate(self) -> None:
        if self.num_keys < 1:
            raise ValueError("need at least one background key")
        if not self.num_keys <= self.distinct_pairs <= self.pairs_total:
            raise ValueError("need num_keys <= distinct_pairs <= pairs_total")
        if self.distinct_pairs - self.num_keys >= (1 << 24):
            raise ValueError("too many distinct background pairs")


def config_to_dict(config) -> dict:
    return asdict(config)


def pairs_config_from_dict(d: dict) -> SyntheticConfig:
    d = dict(d)
    d["injected"] = [InjectedKey(**i) for i in d.get("injected", [])]
    return SyntheticConfig(**d)


@dataclass
class SyntheticTrace:
    stream: EncodedStream
    injected_keys: list[bytes]
    config: SyntheticConfig


def generate_pairs(config: SyntheticConfig) -> SyntheticTrace:
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    K, D, N = config.num_keys, config.distinct_pairs, config.pairs_total

    pop = zipf_weights(K, config.skew)
    # every key gets one subkey, the surplus follows popularity
    w = 1 + rng.multinomial(D - K, pop)
    pair_key = np.repeat(np.arange(K, dtype=np.int64), w)
    offsets = np.concatenate([[0], np.cumsum(w)[:-1]])
    # subkeys are drawn from one shared source pool, distinct within a key
    pool = int(w.max() * 4)
    sub_ids = np.empty(D, dtype=np.int64)
    for kid in np.flatnonzero(w > 1):
        sub_ids[offsets[kid]: offsets[kid] + w[kid]] = rng.choice(pool, size=w[kid], replace=False)
    single = w == 1
    sub_ids[offsets[single]] = rng.integers(0, pool, size=int(single.sum()))

    q = pop[pair_key] / w[pair_key]
    reps = 1 + rng.multinomial(N - D, q / q.sum())

    key_ips = rng.choice(1 << 24, size=K, replace=False) + _IP_BASE_BG
    keys = [_ip(int(n)).encode() for n in key_ips]
    subkeys = [_ip(int(_IP_BASE_BG + s)).encode() for s in sub_ids]

    pair_key_all = [pair_key]
    reps_all = [reps]
    injected_names = []
    inj_sub = 0
    for j, inj in enumerate(config.injected):
        name = (inj.name or f"192.0.2.{j + 1}").encode()
        if name in keys:
            raise ValueError(f"injected key {name!r} collides with background")
        kid = len(keys)
        keys.append(name)
        injected_names.append(name)
        pair_key_all.append(np.full(inj.cardinality, kid, dtype=np.int64))
        reps_all.append(np.full(inj.cardinality, inj.repetitions, dtype=np.int64))
        subkeys.extend(_ip(_IP_BASE_INJ + inj_sub + i).encode() for i in range(inj.cardinality))
        inj_sub += inj.cardinality

    pair_key = np.concatenate(pair_key_all)
    reps = np.concatenate(reps_all)
    fps = np.fromiter((fingerprint(keys[k], s) for k, s in zip(pair_key.tolist(), subkeys)),
                      dtype=np.uint64, count=len(subkeys))
    pair_ids = np.repeat(np.arange(pair_key.size, dtype=np.int64), reps)
    rng.shuffle(pair_ids)
    stream = EncodedStream(keys=keys, key_ids=pair_key[pair_ids], pair_ids=pair_ids,
                           pair_key=pair_key, pair_fp=fps, subkeys=subkeys)
    return SyntheticTrace(stream, injected_names, config)


def distinct_stream(n: int, key: str = "k", prefix: str = "s") -> EncodedStream:
    """One key with ``n`` distinct subkeys, each seen once."""
    keyb = key.encode()
    subkeys = [f"{prefix}{i}".encode() for i in range(n)]
    fps = np.fromiter((fingerprint(keyb, s) for s in subkeys), dtype=np.uint64, count=n)
    return EncodedStream(keys=[keyb], key_ids=np.zeros(n, dtype=np.int64),
                         pair_ids=np.arange(n, dtype=np.int64),
                         pair_key=np.zeros(n, dtype=np.int64), pair_fp=fps, subkeys=subkeys)


def weighted_stream(key_weights: dict, repetitions: dict | None = None,
                    rng_seed: int | None = None) -> EncodedStream:
    """Keys with given distinct weights; subkey ``i`` of key ``x`` is repeated
    ``repetitions[x]`` times. Shuffled when ``rng_seed`` is given."""
    repetitions = repetitions or {}
    keys, pair_key, subkeys, reps = [], [], [], []
    for kid, (key, w) in enumerate(key_weights.items()):
        keyb = key.encode() if isinstance(key, str) else bytes(key)
        keys.append(keyb)
        for i in range(w):
            pair_key.append(kid)
            subkeys.append(f"{i}".encode())
            reps.append(repetitions.get(key, 1))
    pair_key = np.asarray(pair_key, dtype=np.int64)
    fps = np.fromiter((fingerprint(keys[k], s) for k, s in zip(pair_key.tolist(), subkeys)),
                      dtype=np.uint64, count=len(subkeys))
    pair_ids = np.repeat(np.arange(pair_key.size, dtype=np.int64), np.asarray(reps))
    if rng_seed is not None:
        np.random.default_rng(rng_seed).shuffle(pair_ids)
    return EncodedStream(keys=keys, key_ids=pair_key[pair_ids], pair_ids=pair_ids,
                         pair_key=pair_key, pair_fp=fps, subkeys=subkeys)


# -- DNS captures -------------------------------------------------------------

COMMON_LABELS = (
    "www mail api cdn m static img login smtp ns1 ns2 mx autodiscover webmail shop "
    "blog news app docs support portal vpn ftp images media assets video secure "
    "dev test beta status auth accounts my cloud store pay help search maps "
    "drive calendar chat files git wiki remote admin gateway edge cache track "
    "analytics ads metrics push sync update download upload"
).split()

_TLDS = ("com", "net", "org", "io", "de")


@dataclass
class AttackConfig:
    victim: str = "victim-zone.com"
    queries: int = 4133
    distinct: int = 2051
    start: float = 0.0
    end: float = 1.0


@dataclass
class DnsCaptureConfig:
    queries: int = 92_469
    zones: int = 3000
    zone_skew: float = 1.0
    apex_share: float = 0.10
    tail_share: float = 0.05
    tail_pool: int = 30
    disposable_zones: tuple[str, ...] = ("dispo-telemetry.net",)
    disposable_share: float = 0.12
    victim_legit_share: float = 0.004
    attacks: list[AttackConfig] = field(default_factory=list)
    rng_seed: int = 0
    epoch: int = 1_400_000_000
    duration: float = 300.0


@dataclass
class DnsCapture:
    records: list[tuple[float, str, str]]
    is_attack: np.ndarray
    attack_zone: list[str | None]
    config: DnsCaptureConfig

    def lines(self):
        for ts, qname, qtype in self.records:
            yield f"{ts:.3f}\t{qname}\t{qtype}\n"


def _random_label(rng: np.random.Generator, lo: int, hi: int) -> str:
    letters = string.ascii_lowercase + string.digits
    n = int(rng.integers(lo, hi + 1))
    return "".join(letters[i] for i in rng.integers(0, len(letters), size=n))


def _zone_names(rng: np.random.Generator, n: int, reserved: set[str]) -> list[str]:
    names: list[str] = []
    seen = set(reserved)
    while len(names) < n:
        name = f"{_random_label(rng, 4, 10)}.{_TLDS[int(rng.integers(0, len(_TLDS)))]}"
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def generate_dns_capture(config: DnsCaptureConfig) -> DnsCapture:
    """Query log with background traffic and the configured attacks.

    Background queries pick a zone by Zipf popularity and a subkey that is a
    common label, the apex, or one of a small zone-private pool. Attack
    queries carry random labels, each distinct label used at least once,
    spread uniformly over the attack window.
    """
    rng = np.random.default_rng(config.rng_seed)
    n_attack = sum(a.queries for a in config.attacks)
    if any(a.distinct < 1 or a.distinct > a.queries for a in config.attacks):
        raise ValueError("attack needs 1 <= distinct <= queries")
    n_bg = config.queries - n_attack
    if n_bg < 0:
        raise ValueError("attack queries exceed the capture size")

    reserved = set(config.disposable_zones) | {a.victim for a in config.attacks}
    zones = _zone_names(rng, config.zones, reserved)
    zones.extend(a.victim for a in config.attacks if a.victim not in zones)
    victims = {a.victim for a in config.attacks}
    zone_pop = zipf_weights(len(zones), config.zone_skew)
    label_pop = zipf_weights(len(COMMON_LABELS), 1.0)
    common = set(COMMON_LABELS)
    tail_pools: dict[int, list[str]] = {}

    kind = rng.random(n_bg)
    bg_zone = rng.choice(len(zones), size=n_bg, p=zone_pop)
    bg_label = rng.choice(len(COMMON_LABELS), size=n_bg, p=label_pop)
    disp_cut = config.disposable_share if config.disposable_zones else 0.0
    vict_cut = disp_cut + (config.victim_legit_share if victims else 0.0)
    victim_list = sorted(victims)

    background: list[str] = []
    for i in range(n_bg):
        u = kind[i]
        if u < disp_cut:
            zone = config.disposable_zones[int(rng.integers(0, len(config.disposable_zones)))]
            background.append(f"{rng.integers(0, 1 << 48):012x}.{zone}")
            continue
        if u < vict_cut:
            zone = victim_list[int(rng.integers(0, len(victim_list)))]
            background.append(f"{COMMON_LABELS[bg_label[i]]}.{zone}")
            continue
        zone = zones[bg_zone[i]]
        v = (u - vict_cut) / (1.0 - vict_cut)
        if v < config.apex_share:
            background.append(zone)
        elif v < config.apex_share + config.tail_share:
            pool = tail_pools.get(bg_zone[i])
            if pool is None:
                pool = tail_pools[bg_zone[i]] = [
                    f"{_random_label(rng, 3, 6)}-{j}" for j in range(config.tail_pool)]
            background.append(f"{pool[int(rng.integers(0, len(pool)))]}.{zone}")
        else:
            background.append(f"{COMMON_LABELS[bg_label[i]]}.{zone}")

    qnames: list[str | None] = [None] * config.queries
    is_attack = np.zeros(config.queries, dtype=bool)
    attack_zone: list[str | None] = [None] * config.queries
    taken = np.zeros(config.queries, dtype=bool)
    for a in config.attacks:
        labels: list[str] = []
        seen: set[str] = set()
        while len(labels) < a.distinct:
            lab = _random_label(rng, 7, 12)
            if lab not in seen and lab not in common:
                seen.add(lab)
                labels.append(lab)
        counts = np.ones(a.distinct, dtype=np.int64)
        counts += rng.multinomial(a.queries - a.distinct, np.full(a.distinct, 1.0 / a.distinct))
        order = rng.permutation(np.repeat(np.arange(a.distinct), counts))
        lo = int(a.start * config.queries)
        hi = max(lo + a.queries, int(a.end * config.queries))
        free = np.flatnonzero(~taken[lo:hi]) + lo
        if free.size < a.queries:
            raise ValueError("attack window too small")
        pos = np.sort(rng.choice(free, size=a.queries, replace=False))
        taken[pos] = True
        for p, lab in zip(pos.tolist(), order.tolist()):
            qnames[p] = f"{labels[lab]}.{a.victim}"
            is_attack[p] = True
            attack_zone[p] = a.victim
    it = iter(background)
    for i in range(config.queries):
        if qnames[i] is None:
            qnames[i] = next(it)

    step = config.duration / max(config.queries, 1)
    qtypes = np.where(rng.random(config.queries) < 0.8, "A", "AAAA")
    records = [(config.epoch + i * step, q, str(t)) for i, (q, t) in enumerate(zip(qnames, qtypes))]
    return DnsCapture(records, is_attack, attack_zone, config)


def dns_config_from_dict(d: dict) -> DnsCaptureConfig:
    d = dict(d)
    d["attacks"] = [AttackConfig(**a) for a in d.get("attacks", [])]
    d["disposable_zones"] = tuple(d.get("disposable_zones", ()))
    return DnsCaptureConfig(**d)
