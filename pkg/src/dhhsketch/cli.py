"""Command-line front end.

Pair traces are ``key<TAB>subkey`` lines; DNS traces are
``epoch<TAB>qname<TAB>qtype`` lines. Reports and signatures are
line-delimited JSON with a header record first.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from typing import Iterator, TextIO

from .classic import SpaceSavingCache
from .cws import ChhSketch
from .dns import (AttackState, PeacetimeState, Whitelist, build_whitelists, parse_query,
                  ParseError, read_dns_trace, signatures, write_dns_trace, write_signatures)
from .dws import DwsSketch
from .evaluation import OracleTable, evaluate, stream_oracle
from .hashing import parse_seed, random_seed
from .report import read_report, sketch_header, sketch_rows, write_report
from .stream import PAIRS_HEADER, StreamEncoder, open_text, peek_lines, read_pair_lines, write_pair_trace
from .synth import (AttackConfig, DnsCaptureConfig, InjectedKey, SyntheticConfig, config_to_dict,
                    generate_dns_capture, generate_pairs, pairs_config_from_dict)

log = logging.getLogger("dhhsketch")

CONFIG_PREFIX = "# config: "


class CliError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("sketch parameters")
    g.add_argument("--hash-seed", type=parse_seed, default=None,
                   help="64-bit hash seed, decimal or 0x hex (random when omitted)")
    g.add_argument("-k", "--cache-size", type=int, default=None, help="cache size k")
    g.add_argument("-l", "--buckets", type=int, default=None, help="buckets per distinct counter")
    g.add_argument("--rho", type=float, default=0.1, help="classic-weight share for combined sampling")
    g.add_argument("--zone-depth", type=int, default=2, help="labels kept as the DNS zone key")
    g.add_argument("--confidence", type=float, default=0.95, help="interval confidence level")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _inject_arg(text: str) -> InjectedKey:
    card, _, reps = text.partition(":")
    try:
        return InjectedKey(int(card), int(reps) if reps else 1)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected CARD[:REPS], got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="dhhsketch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic trace")
    p.add_argument("--kind", choices=("pairs", "dns"), default="pairs")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--keys", type=int, default=SyntheticConfig.num_keys)
    p.add_argument("--skew", type=float, default=SyntheticConfig.skew)
    p.add_argument("--pairs", type=int, default=SyntheticConfig.pairs_total)
    p.add_argument("--distinct-pairs", type=int, default=SyntheticConfig.distinct_pairs)
    p.add_argument("--inject", type=_inject_arg, action="append", metavar="CARD[:REPS]",
                   help="injected key (repeatable; default 2000, 1000, 500, 250)")
    p.add_argument("--queries", type=int, default=DnsCaptureConfig.queries)
    p.add_argument("--victim", action="append", help="attacked zone (repeatable)")
    p.add_argument("--attack-queries", type=int, default=AttackConfig.queries)
    p.add_argument("--attack-distinct", type=int, default=AttackConfig.distinct)
    p.add_argument("--no-attack", action="store_true", help="peacetime capture")

    p = sub.add_parser("sketch", parents=[common], help="sketch a trace and write a report")
    p.add_argument("trace", nargs="?", default="-")
    p.add_argument("--algo", choices=("dws", "cws", "ss"), default="dws")
    p.add_argument("--seed-every-element", action="store_true",
                   help="cws: fold every element's draw into a cached key's seed")
    p.add_argument("--input-format", choices=("auto", "pairs", "dns"), default="auto")
    p.add_argument("-o", "--output", default="-")

    p = sub.add_parser("oracle", parents=[common], help="exact per-key counts of a trace")
    p.add_argument("trace", nargs="?", default="-")
    p.add_argument("--input-format", choices=("auto", "pairs", "dns"), default="auto")
    p.add_argument("-o", "--output", default="-")

    p = sub.add_parser("eval", parents=[common], help="score a sketch report against exact counts")
    p.add_argument("report", nargs="?", default="-")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", help="trace the report was built from")
    src.add_argument("--oracle", help="oracle table from the oracle subcommand")
    p.add_argument("--weight", choices=("distinct", "combined"), default=None,
                   help="defaults to combined for cws reports")
    p.add_argument("--format", choices=("table", "jsonl", "csv"), default="table")
    p.add_argument("--top", type=int, default=20, help="rows in the table view")
    p.add_argument("-o", "--output", default="-")

    p = sub.add_parser("peacetime", parents=[common], help="build DNS whitelists")
    p.add_argument("trace", nargs="?", default="-")
    p.add_argument("--zone-min-combined", type=float, default=None,
                   help="default 10 * (estimated distinct pairs) / k")
    p.add_argument("--subkey-min-freq", type=float, default=None,
                   help="fraction of queries, default 0.001")
    p.add_argument("--ss-capacity", type=int, default=1024)
    p.add_argument("--subkey-mode", choices=("full", "leftmost"), default="full")
    p.add_argument("-o", "--output", default="-")

    p = sub.add_parser("detect", parents=[common], help="emit attack signatures")
    p.add_argument("trace", nargs="?", default="-")
    p.add_argument("--whitelist", help="whitelist file from the peacetime subcommand")
    p.add_argument("--min-distinct", type=float, default=None,
                   help="default (estimated distinct pairs) / k")
    p.add_argument("--subkey-mode", choices=("full", "leftmost"), default="full")
    p.add_argument("--window", type=int, default=None,
                   help="restart the sketch every N queries and report per window")
    p.add_argument("-o", "--output", default="-")
    return parser


# -- input ---------------------------------------------------------------

def _sniff(head: list[str], declared: str) -> str:
    if declared != "auto":
        return declared
    for line in head:
        if line.startswith(PAIRS_HEADER):
            return "pairs"
        if line.startswith("# format: dns"):
            return "dns"
    data = [ln for ln in head if ln.strip() and not ln.startswith("#")]
    if data and len(data[0].rstrip("\r\n").split("\t")) >= 3:
        return "dns"
    return "pairs"


def _source_config(head: list[str]) -> dict | None:
    for line in head:
        if line.startswith(CONFIG_PREFIX):
            return json.loads(line[len(CONFIG_PREFIX):])
    return None


def _dns_pairs(lines, zone_depth: int, diag: dict) -> Iterator[tuple[str, str]]:
    for rec in read_dns_trace(lines, diag):
        try:
            sp = parse_query(rec.qname, zone_depth)
        except ParseError:
            diag["parse_errors"] = diag.get("parse_errors", 0) + 1
            continue
        yield sp.key, sp.subkey


def _load_stream(path: str, fmt: str, zone_depth: int):
    with _open(path) as fh:
        head, lines = peek_lines(fh)
        kind = _sniff(head, fmt)
        diag: dict = {}
        pairs = read_pair_lines(lines) if kind == "pairs" else _dns_pairs(lines, zone_depth, diag)
        enc = StreamEncoder()
        enc.extend(pairs)
        stream = enc.build()
    return stream, kind, _source_config(head), diag


@contextlib.contextmanager
def _open(path: str, mode: str = "r") -> Iterator[TextIO]:
    fh = open_text(path, mode)
    try:
        yield fh
    finally:
        if fh is sys.stdout:
            fh.flush()
        elif fh is not sys.stdin:
            fh.close()


def _out(path: str):
    return _open(path, "w")


# -- subcommands ---------------------------------------------------------

def cmd_gen(args) -> None:
    with _out(args.output) as fh:
        if args.kind == "pairs":
            cfg = SyntheticConfig(num_keys=args.keys, skew=args.skew, pairs_total=args.pairs,
                                  distinct_pairs=args.distinct_pairs, rng_seed=args.seed)
            if args.inject:
                cfg.injected = args.inject
            trace = generate_pairs(cfg)
            fh.write(PAIRS_HEADER + "\n")
            fh.write(CONFIG_PREFIX + json.dumps(config_to_dict(cfg), sort_keys=True) + "\n")
            write_pair_trace(fh, trace.stream)
            log.info("wrote %d pairs over %d keys", len(trace.stream), len(trace.stream.keys))
        else:
            attacks = [] if args.no_attack else [
                AttackConfig(v, args.attack_queries, args.attack_distinct)
                for v in (args.victim or [AttackConfig.victim])]
            cfg = DnsCaptureConfig(queries=args.queries, attacks=attacks, rng_seed=args.seed)
            cap = generate_dns_capture(cfg)
            fh.write("# format: dns\n")
            fh.write(CONFIG_PREFIX + json.dumps(config_to_dict(cfg), sort_keys=True) + "\n")
            write_dns_trace(fh, cap.records)
            log.info("wrote %d queries, %d attack", len(cap.records), int(cap.is_attack.sum()))


def _hash_seed(args) -> int:
    return random_seed() if args.hash_seed is None else args.hash_seed


def cmd_sketch(args) -> None:
    stream, kind, source, diag = _load_stream(args.trace, args.input_format, args.zone_depth)
    k = args.cache_size or 2000
    ell = args.buckets or 64
    seed = _hash_seed(args)
    extra = {"input_format": kind, **diag}
    if source is not None:
        extra["source_config"] = source
    with _out(args.output) as fh:
        if args.algo == "ss":
            ss = SpaceSavingCache(k)
            names = stream.keys
            ss.process_many(names[i] for i in stream.key_ids.tolist())
            head = {"type": "header", "algo": "ss", "k": k, "elements": ss.total, **extra}
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for key, count, bound in ss.top():
                rec = {"type": "ss_entry", "key": key.decode("utf-8", "backslashreplace"),
                       "count": count, "bound": bound}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            return
        if args.algo == "dws":
            sk = DwsSketch(k=k, ell=ell, hash_seed=seed)
        else:
            sk = ChhSketch(k=k, ell=ell, rho=args.rho, hash_seed=seed,
                           seed_every_element=args.seed_every_element)
        sk.process_stream(stream)
        write_report(fh, sketch_header(sk, args.algo, args.confidence, **extra),
                     sketch_rows(sk, args.confidence))


def cmd_oracle(args) -> None:
    stream, *_ = _load_stream(args.trace, args.input_format, args.zone_depth)
    with _out(args.output) as fh:
        stream_oracle(stream, args.rho).write(fh)


def cmd_eval(args) -> None:
    with _open(args.report) as fh:
        header, rows = read_report(fh)
    if header.get("algo") not in ("dws", "cws"):
        raise CliError(f"cannot evaluate a {header.get('algo')!r} report")
    rho = header.get("rho", args.rho)
    if args.oracle:
        with _open(args.oracle) as fh:
            oracle = OracleTable.read(fh, rho)
    elif args.trace:
        stream, *_ = _load_stream(args.trace, "auto", header.get("zone_depth", args.zone_depth))
        oracle = stream_oracle(stream, rho)
    elif "source_config" in header and header.get("input_format") == "pairs":
        oracle = stream_oracle(generate_pairs(pairs_config_from_dict(header["source_config"])).stream, rho)
    else:
        raise CliError("give --trace or --oracle; the report does not name a regenerable source")
    weight = args.weight or ("combined" if header["algo"] == "cws" else "distinct")
    rep = evaluate(rows, oracle, header["k"], header["ell"], header.get("confidence", args.confidence),
                   weight)
    with _out(args.output) as fh:
        if args.format == "table":
            rep.write_table(fh, args.top)
        elif args.format == "jsonl":
            rep.write_jsonl(fh)
        else:
            rep.write_csv(fh)


def _dns_records(path: str, diag: dict):
    with _open(path) as fh:
        return list(read_dns_trace(fh, diag))


def cmd_peacetime(args) -> None:
    diag: dict = {}
    records = _dns_records(args.trace, diag)
    state = PeacetimeState(k=args.cache_size or 50, ell=args.buckets or 256, rho=args.rho,
                           hash_seed=_hash_seed(args), zone_depth=args.zone_depth,
                           subkey_mode=args.subkey_mode, ss_capacity=args.ss_capacity)
    state.process_records(records)
    wl = build_whitelists(state, args.zone_min_combined, args.subkey_min_freq)
    with _out(args.output) as fh:
        fh.write(f"# queries={state.total_queries} parse_errors={state.parse_errors} "
                 f"hash_seed={state.hash_seed}\n")
        wl.write(fh)
    log.info("%d zones, %d subkeys whitelisted", len(wl.zones), len(wl.subkeys))


def cmd_detect(args) -> None:
    wl = Whitelist()
    if args.whitelist:
        with _open(args.whitelist) as fh:
            wl = Whitelist.read(fh)
    diag: dict = {}
    records = _dns_records(args.trace, diag)
    state = AttackState(wl, k=args.cache_size or 50, ell=args.buckets or 256, rho=args.rho,
                        hash_seed=_hash_seed(args), zone_depth=args.zone_depth,
                        subkey_mode=args.subkey_mode)
    if args.window is not None and args.window < 1:
        raise CliError("--window must be positive")
    size = args.window or max(len(records), 1)
    with _out(args.output) as fh:
        for start in range(0, max(len(records), 1), size):
            state.reset()
            state.process_records(records[start:start + size])
            threshold = (args.min_distinct if args.min_distinct is not None
                         else state.default_distinct_threshold())
            sigs = signatures(state, threshold, args.confidence)
            write_signatures(fh, sigs, state, threshold)
            log.info("window at %d: %d signatures", start, len(sigs))


COMMANDS = {
    "gen": cmd_gen, "sketch": cmd_sketch, "oracle": cmd_oracle, "eval": cmd_eval,
    "peacetime": cmd_peacetime, "detect": cmd_detect,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except BrokenPipeError:
        return 0
    except (CliError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"dhhsketch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
