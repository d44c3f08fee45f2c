import gzip
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhhsketch.dns import (AttackState, DnsQueryRecord, ParseError, PeacetimeState, Whitelist,
                           ZoneSplit, build_whitelists, normalize_qname, parse_query, read_dns_trace,
                           signatures, write_signatures)
from dhhsketch.stream import open_text
from dhhsketch.synth import AttackConfig, DnsCaptureConfig, generate_dns_capture


@pytest.fixture(scope="module")
def peacetime_whitelist():
    cap = generate_dns_capture(DnsCaptureConfig(queries=100_000, rng_seed=500))
    state = PeacetimeState(hash_seed=1)
    state.process_records(r[1] for r in cap.records)
    return build_whitelists(state)


# -- parsing ------------------------------------------------------------------

@pytest.mark.parametrize("qname,depth,key,sub", [
    ("bjsufyd.www.google.com", 2, "google.com", "bjsufyd.www"),
    ("google.com", 2, "google.com", ""),
    ("a.b.c.d.example.co.uk", 3, "example.co.uk", "a.b.c.d"),
    ("WWW.Example.COM.", 2, "example.com", "www"),
    ("localhost", 2, "localhost", ""),
])
def test_parse_query(qname, depth, key, sub):
    assert parse_query(qname, depth) == ZoneSplit(key, sub)


def test_leftmost_subkey_mode():
    assert parse_query("bjsufyd.www.google.com", 2, "leftmost").subkey == "bjsufyd"
    with pytest.raises(ValueError):
        parse_query("a.b.c", 2, "middle")


@pytest.mark.parametrize("qname", ["", ".", "a..com", "  ", "bad name.com"])
def test_unparseable_names(qname):
    with pytest.raises(ParseError):
        parse_query(qname)


def test_zone_depth_guard():
    with pytest.raises(ValueError):
        parse_query("a.com", 0)


@settings(max_examples=100, deadline=None)
@given(labels=st.lists(st.text("abcxyz0-", min_size=1, max_size=6), min_size=1, max_size=6),
       depth=st.integers(1, 4))
def test_split_reconstructs_name(labels, depth):
    qname = ".".join(labels)
    sp = parse_query(qname, depth)
    assert len(sp.key.split(".")) == min(depth, len(labels))
    assert (f"{sp.subkey}.{sp.key}" if sp.subkey else sp.key) == qname


def test_read_trace_skips_comments_and_counts_bad_lines(tmp_path):
    text = "# capture\n1.5\tA.example.com\tA\nnot-a-time\tb.example.com\tA\n\nc.example.com\n"
    diag = {}
    recs = list(read_dns_trace(io.StringIO(text), diag))
    assert recs == [DnsQueryRecord("A.example.com", "A", 1.5), DnsQueryRecord("c.example.com")]
    assert diag == {"malformed_lines": 1}
    path = tmp_path / "t.tsv.gz"
    with gzip.open(path, "wt") as fh:
        fh.write(text)
    with open_text(path) as fh:
        assert len(list(read_dns_trace(fh))) == 2


# -- whitelists ---------------------------------------------------------------

def test_whitelist_file_round_trip():
    wl = Whitelist({"Dispo.NET"}, {"www", "", "Mail"}, {"dispo.net": 5000.0}, {"www": 900})
    assert wl.zones == {"dispo.net"} and wl.subkeys == {"www", "", "mail"}
    buf = io.StringIO()
    wl.write(buf)
    back = Whitelist.read(io.StringIO(buf.getvalue()))
    assert back.zones == wl.zones and back.subkeys == wl.subkeys
    assert back.zone_counts == {"dispo.net": 5000.0} and back.subkey_counts == {"www": 900}


def test_whitelist_needs_sections():
    with pytest.raises(ValueError):
        Whitelist.read(io.StringIO("www\n"))


def test_no_peacetime_traffic_gives_empty_whitelists():
    wl = build_whitelists(PeacetimeState(hash_seed=0))
    assert wl.zones == set() and wl.subkeys == set()


def test_threshold_guards():
    state = PeacetimeState(hash_seed=0)
    with pytest.raises(ValueError):
        build_whitelists(state, zone_min_combined=0)
    with pytest.raises(ValueError):
        build_whitelists(state, subkey_min_freq=-0.1)


def test_disposable_zone_and_frequent_subkey_whitelisted():
    rng = np.random.default_rng(1)
    queries = [f"{rng.integers(1 << 40):x}.dispo.net" for _ in range(5000)]
    queries += [f"www.site{i % 400}.com" for i in range(6000)]
    queries += [f"{rng.choice(['a', 'b', 'c'])}{i % 50}.site{i % 400}.com" for i in range(9000)]
    queries = [queries[i] for i in rng.permutation(len(queries))]
    state = PeacetimeState(k=50, ell=256, hash_seed=3)
    state.process_records(queries)
    assert state.sketch.report()[0].key == b"dispo.net"
    wl = build_whitelists(state, zone_min_combined=500, subkey_min_freq=0.001)
    assert wl.zones == {"dispo.net"}
    assert "www" in wl.subkeys
    assert build_whitelists(state, zone_min_combined=1e9, subkey_min_freq=0.9).zones == set()


# -- attack phase ------------------------------------------------------------

def test_attack_filtering_rules():
    wl = Whitelist({"dispo.net"}, {"mail"})
    st_ = AttackState(wl, hash_seed=0)
    idx = st_.process_records(["xqzt7.victim.com", "mail.victim.com", "abc.dispo.net", "bad..name"])
    assert idx.tolist() == [0, -1, -1, -1]
    assert st_.passed_subkey == 1 and st_.passed_zone == 1 and st_.parse_errors == 1
    assert st_.sketch.cached_keys() == {b"victim.com"}


@settings(max_examples=30, deadline=None)
@given(names=st.lists(st.sampled_from(["www", "mail", "x1", "x2", "q9", ""]), max_size=60),
       zones=st.lists(st.sampled_from(["a.com", "b.net"]), min_size=60, max_size=60))
def test_whitelisted_subkeys_never_sketched(names, zones):
    wl = Whitelist(set(), {"www", "mail", ""})
    state = AttackState(wl, k=4, ell=8, hash_seed=1)
    qnames = [f"{n}.{z}" if n else z for n, z in zip(names, zones)]
    idx = state.process_records(qnames)
    for n, i in zip(names, idx.tolist()):
        assert (i == -1) == (n in wl.subkeys)
    assert state.sketch.n_seen == sum(n not in wl.subkeys for n in names)


def test_no_attack_means_no_signatures(peacetime_whitelist):
    cap = generate_dns_capture(DnsCaptureConfig(rng_seed=7))
    state = AttackState(peacetime_whitelist, hash_seed=2)
    state.process_records(r[1] for r in cap.records)
    assert signatures(state) == []


def test_single_victim_signed(peacetime_whitelist):
    cap = generate_dns_capture(DnsCaptureConfig(attacks=[AttackConfig()], rng_seed=8))
    state = AttackState(peacetime_whitelist, hash_seed=5)
    idx = state.process_records(r[1] for r in cap.records)
    sigs = signatures(state)
    assert [s.zone for s in sigs] == ["victim-zone.com"]
    sig = sigs[0]
    assert sig.lo <= sig.estimated_distinct <= sig.hi
    assert sig.zone not in peacetime_whitelist.zones
    assert "unless subkey" in sig.rule
    entered = state.sketch.entry("victim-zone.com").entered_at
    attack_idx = idx[cap.is_attack]
    assert np.mean(attack_idx >= entered) >= 0.99


def test_two_victims_both_signed(peacetime_whitelist):
    attacks = [AttackConfig("first-victim.com", 4000, 2000), AttackConfig("second-victim.org", 3000, 1500)]
    cap = generate_dns_capture(DnsCaptureConfig(attacks=attacks, rng_seed=9))
    state = AttackState(peacetime_whitelist, hash_seed=6)
    state.process_records(r[1] for r in cap.records)
    assert {s.zone for s in signatures(state)} == {"first-victim.com", "second-victim.org"}


def test_signature_report_is_deterministic(peacetime_whitelist):
    cap = generate_dns_capture(DnsCaptureConfig(attacks=[AttackConfig()], rng_seed=10))
    reports = []
    for _ in range(2):
        state = AttackState(peacetime_whitelist, hash_seed=0xABC)
        state.process_records(r[1] for r in cap.records)
        sigs = signatures(state)
        buf = io.StringIO()
        write_signatures(buf, sigs, state, state.default_distinct_threshold())
        reports.append(buf.getvalue())
    assert reports[0] == reports[1]
    header, first = (json.loads(x) for x in reports[0].splitlines()[:2])
    assert header["hash_seed"] == 0xABC and header["signatures"] == 1
    assert first["zone"] == "victim-zone.com"


def test_window_reset_starts_fresh():
    state = AttackState(Whitelist(), k=5, ell=8, hash_seed=3)
    state.process_records([f"s{i}.v.com" for i in range(50)])
    assert len(state.sketch) == 1
    state.reset()
    assert len(state.sketch) == 0 and state.total_queries == 0 and state.hash_seed == 3
    assert state.process("a.b.com") == 0


def test_normalize_strips_and_folds():
    assert normalize_qname(" WWW.Example.com. ") == ["www", "example", "com"]
