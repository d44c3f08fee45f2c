import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pytest

from dhhsketch.cws import ChhSketch, combined_estimate, erand_from_uniform
from dhhsketch.dws import ChhEntry, DwsSketch
from dhhsketch.evaluation import stream_oracle
from dhhsketch.stream import encode_pairs
from dhhsketch.synth import weighted_stream


@dataclass
class StubCounter:
    value: float
    sd: float

    def card_est(self):
        return self.value

    def std_error(self):
        return self.sd


def entry(card, f, tau_x=1.0, sd=0.0):
    return ChhEntry(key=b"x", counter=StubCounter(card, sd), seed=0.0, tau_entry=tau_x, f=f)


@pytest.mark.parametrize("rho", [0.0, -0.1, 1.5])
def test_rho_must_be_in_unit_interval(rho):
    with pytest.raises(ValueError):
        ChhSketch(k=4, rho=rho)


def test_point_estimate_arithmetic():
    assert combined_estimate(entry(5.0, 10), 0.1).point == pytest.approx(6.0)


def test_interval_collapses_without_error():
    est = combined_estimate(entry(5.0, 10), 0.1)
    assert est.lo == pytest.approx(6.0) and est.hi == pytest.approx(6.0)


def test_interval_endpoints():
    e = entry(100.0, 50, tau_x=0.2, sd=10.0)
    est = combined_estimate(e, 0.1)
    prefix_sd = math.sqrt(0.8 / 0.04)
    assert est.point == pytest.approx(105.0)
    assert est.lo == pytest.approx(105.0 - 20.0)
    assert est.hi == pytest.approx(105.0 - 1 + 5 + 2 * math.sqrt(100 + prefix_sd ** 2))
    shifted = combined_estimate(e, 0.1, shifted_upper=True)
    assert shifted.lo == est.lo
    assert shifted.hi == pytest.approx(est.hi - 20.0)


def test_erand_distribution():
    # 1 - (1-t)**rho has a few percent of its mass within one ulp of 1, which
    # rounds onto a single double, so compare the CDF on a grid instead of KS
    rho, n = 0.1, 200_000
    r = erand_from_uniform(np.random.default_rng(0).random(n), rho)
    assert r.min() >= 0.0 and r.max() < 1.0
    for t in (1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.999):
        p = 1 - (1 - t) ** rho
        assert abs(np.mean(r < t) - p) < 4 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("h_count", [1, 10, 100])
def test_min_of_erand_draws(h_count):
    rho, tau, trials = 0.1, 0.01, 40_000
    u = np.random.default_rng(h_count).random((trials, h_count))
    hit = (erand_from_uniform(u, rho).min(axis=1) < tau).mean()
    p = 1 - (1 - tau) ** (rho * h_count)
    assert abs(hit - p) < 4 * math.sqrt(p * (1 - p) / trials)


def test_hand_trace_counts_and_seeds():
    sk = ChhSketch(k=2, ell=8, rho=0.1, hash_seed=0)
    # pair hash above tau is still admitted by a small draw
    sk.process_hashed(["X"], [0.9], [0], r=[0.3])
    e = sk.entry("X")
    assert e.seed == 0.3 and e.f == 1 and e.tau_entry == 1.0 and e.card_est == 1.0
    # same pair again: counter unchanged, so a smaller draw is not folded in
    sk.process_hashed(["X"], [0.9], [0], r=[0.1])
    e = sk.entry("X")
    assert e.f == 2 and e.seed == 0.3 and e.card_est == 1.0
    # a new subkey changes the counter; the draw now lowers the seed
    sk.process_hashed(["X"], [0.7], [1], r=[0.05])
    e = sk.entry("X")
    assert e.f == 3 and e.seed == 0.05 and e.card_est > 1.0
    sk.process_hashed(["Y", "Z"], [0.5, 0.6], [0, 0], r=[0.9, 0.9])
    assert sk.cached_keys() == {b"X", b"Y"} and sk.tau == 0.6


def test_fixed_threshold_single_subkey_entry_probability():
    # rho = 1: draws are plain uniforms; the pair hash is drawn once
    tau, reps, trials = 0.05, 10, 4000
    stream = encode_pairs([("a", "same")] * reps)
    hits = 0
    for s in range(trials):
        sk = ChhSketch(k=None, ell=4, rho=1.0, hash_seed=s, fixed_tau=tau)
        sk.process_stream(stream)
        hits += "a" in sk
    p = 1 - (1 - tau) ** (1 + reps)
    assert abs(hits / trials - p) < 4 * math.sqrt(p * (1 - p) / trials)


def test_heavy_repeated_key_cached_light_key_not():
    # A cached key's seed only absorbs draws when its counter changes, so a
    # key repeating one subkey keeps its entry seed and loses the single
    # slot to the light key about 1% of the time (a per-run rate, which
    # is why this is checked over many seeds rather than 100 out of 100).
    stream = encode_pairs([("heavy", "one")] * 10_000 + [("light", "one")])
    stream = stream.permuted(np.random.default_rng(0).permutation(len(stream)))
    runs = 2000
    heavy = light = 0
    for s in range(runs):
        sk = ChhSketch(k=1, ell=16, rho=0.1, hash_seed=s)
        sk.process_stream(stream)
        heavy += "heavy" in sk
        light += "light" in sk
    assert heavy >= 0.98 * runs
    assert light <= 0.02 * runs


def test_seed_every_element_holds_the_repeated_key():
    stream = encode_pairs([("heavy", "one")] * 10_000 + [("light", "one")])
    stream = stream.permuted(np.random.default_rng(0).permutation(len(stream)))
    heavy = 0
    for s in range(300):
        sk = ChhSketch(k=1, ell=16, rho=0.1, hash_seed=s, seed_every_element=True)
        sk.process_stream(stream)
        heavy += "heavy" in sk
    assert heavy == 300


def test_seed_rules_agree_on_distinct_streams():
    # every element changes the counter, so both rules fold the same draws
    stream = weighted_stream({f"k{i}": 1 + i for i in range(40)}, rng_seed=6)
    a = ChhSketch(k=10, ell=4096, hash_seed=3)
    b = ChhSketch(k=10, ell=4096, hash_seed=3, seed_every_element=True)
    a.process_stream(stream)
    b.process_stream(stream)
    assert [(e.key, e.seed, e.f) for e in a.entries()] == [(e.key, e.seed, e.f) for e in b.entries()]


def test_close_to_distinct_sampling_for_tiny_rho():
    weights = {"a": 8, "b": 4, "c": 2, "d": 1, "e": 1}
    stream = weighted_stream(weights, rng_seed=3)
    trials = 100_000
    got_c, got_d = Counter(), Counter()
    for s in range(trials):
        c = ChhSketch(k=2, ell=4, rho=1e-3, hash_seed=s)
        c.process_stream(stream)
        got_c[frozenset(c.cached_keys())] += 1
        d = DwsSketch(k=2, ell=4, hash_seed=s + 10**6)
        d.process_stream(stream)
        got_d[frozenset(d.cached_keys())] += 1
    tv = 0.5 * sum(abs(got_c[x] - got_d[x]) for x in set(got_c) | set(got_d)) / trials
    assert tv < 0.05


def _coverage_stream():
    rng = np.random.default_rng(12)
    weights = {f"k{i}": int(w) for i, w in enumerate(np.maximum(1, 3000 / np.arange(1, 301)))}
    reps = {k: int(rng.integers(1, 6)) for k in weights}
    return weighted_stream(weights, reps, rng_seed=5)


def test_combined_interval_coverage():
    stream = _coverage_stream()
    oracle = stream_oracle(stream, 0.1)
    truth = dict(zip(oracle.keys, oracle.b))
    k = 50
    t = oracle.b.sum() / k
    hit = shifted_hit = total = 0
    for s in range(500):
        sk = ChhSketch(k=k, ell=64, rho=0.1, hash_seed=s)
        sk.process_stream(stream)
        for e in sk.entries():
            b = truth[e.key.decode()]
            if b <= t:
                continue
            total += 1
            hit += b in combined_estimate(e, 0.1)
            shifted_hit += b in combined_estimate(e, 0.1, shifted_upper=True)
    assert total > 500
    assert hit / total >= 0.90
    assert shifted_hit < hit


def test_report_ranks_by_combined_point():
    stream = weighted_stream({"loud": 5, "wide": 60}, repetitions={"loud": 2000}, rng_seed=1)
    sk = ChhSketch(k=5, ell=64, rho=0.1, hash_seed=4)
    sk.process_stream(stream)
    assert [e.key for e in sk.report()] == [b"loud", b"wide"]
    loud = sk.entry("loud")
    assert loud.f <= 10_000 and sk.estimate(loud).point == pytest.approx(loud.card_est + 0.1 * loud.f)


def test_serialization_round_trip_keeps_counts():
    stream = weighted_stream({f"k{i}": 1 + i for i in range(40)}, repetitions={"k3": 7}, rng_seed=2)
    sk = ChhSketch(k=10, ell=16, rho=0.25, hash_seed=99, rng_seed=1234)
    sk.process_stream(stream)
    back = ChhSketch.from_bytes(sk.to_bytes())
    assert back.rho == 0.25 and back.rng_seed == 1234 and not back.seed_every_element
    assert back.to_bytes() == sk.to_bytes()
    assert {e.key: e.f for e in back.entries()} == {e.key: e.f for e in sk.entries()}


def test_round_trip_keeps_seed_rule():
    sk = ChhSketch(k=4, hash_seed=1, seed_every_element=True)
    sk.process_many([("a", "x"), ("a", "x"), ("b", "y")])
    assert ChhSketch.from_bytes(sk.to_bytes()).seed_every_element


def test_seeded_runs_repeat():
    stream = _coverage_stream()
    a = ChhSketch(k=20, hash_seed=8)
    b = ChhSketch(k=20, hash_seed=8)
    a.process_stream(stream)
    b.process_stream(stream)
    assert a.to_bytes() == b.to_bytes()
