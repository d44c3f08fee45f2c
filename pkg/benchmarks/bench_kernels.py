"""Time the compiled kernels against their plain-Python sources.

    python benchmarks/bench_kernels.py --elements 200000

The Python path is slow (tens of seconds per million elements), so keep
``--elements`` modest when comparing; the compiled path is also timed on
the full replica trace.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dhhsketch import kernels
from dhhsketch._accel import NUMBA_ENABLED
from dhhsketch.dws import DwsSketch
from dhhsketch.hashing import HashSeed, bucket_array, unit_hash_array
from dhhsketch.synth import SyntheticConfig, generate_pairs


def _state(k: int, ell: int, n_keys: int) -> dict:
    cap = k + 1
    return dict(
        key_slot=np.full(n_keys, -1, dtype=np.int64), slot_key=np.full(cap, -1, dtype=np.int64),
        c=np.ones((cap, ell)), cardest=np.zeros(cap), seed=np.ones(cap), tau_entry=np.ones(cap),
        f=np.zeros(cap, dtype=np.int64), entered_at=np.zeros(cap, dtype=np.int64),
        free_stack=np.arange(cap - 1, -1, -1, dtype=np.int64),
        state_i=np.array([0, cap, 0], dtype=np.int64), state_f=np.array([1.0]),
    )


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--elements", type=int, default=200_000)
    ap.add_argument("-k", type=int, default=2000)
    ap.add_argument("-l", "--ell", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not NUMBA_ENABLED:
        raise SystemExit("numba is disabled; unset DHHSKETCH_DISABLE_NUMBA to compare")

    stream = generate_pairs(SyntheticConfig(rng_seed=0)).stream
    n = min(args.elements, len(stream))
    key_ids = stream.key_ids[:n]
    fps = stream.fps[:n]
    h = unit_hash_array(HashSeed(1), fps)
    b = bucket_array(HashSeed(1), fps, args.ell)
    n_keys = len(stream.keys)

    def ws(fn):
        return lambda: fn(key_ids, h, b, h, False, False, args.k, False, **_state(args.k, args.ell, n_keys))

    def hip(fn):
        return lambda: fn(np.ones(args.ell), np.zeros(1), h, b)

    ws(kernels.ws_update)()  # compile outside the timer
    rows = []
    for name, compiled, plain in (("ws_update", ws(kernels.ws_update), ws(kernels.ws_update.py_func)),
                                  ("hip_merge", hip(kernels.hip_merge), hip(kernels.hip_merge.py_func))):
        tc = _best(compiled, args.repeat)
        tp = _best(plain, 1)
        rows.append((name, tc, tp))

    print(f"{n:,} elements, k={args.k}, ell={args.ell}")
    print(f"{'kernel':<12}{'numba s':>10}{'python s':>11}{'speedup':>10}")
    for name, tc, tp in rows:
        print(f"{name:<12}{tc:>10.4f}{tp:>11.3f}{tp / tc:>9.0f}x")

    sk_time = _best(lambda: DwsSketch(k=args.k, ell=args.ell, hash_seed=1).process_stream(stream),
                    args.repeat)
    print(f"DwsSketch on the full {len(stream):,}-element replica: {sk_time:.3f} s "
          f"({len(stream) / sk_time / 1e6:.1f} M elements/s)")


if __name__ == "__main__":
    main()
