"""Per-element update loops.

These are the only places where the stream is walked element by element.
They take pre-hashed arrays and mutate state arrays in place. Scalar state
that must survive between calls lives in small arrays (``state_i`` and
``state_f``) because numba cannot rebind the caller's variables.
"""

from __future__ import annotations

import numpy as np

from ._accel import maybe_njit

# state_i layout
N_ENTRIES = 0
FREE_TOP = 1
N_SEEN = 2
# state_f layout
TAU = 0


@maybe_njit
def hip_merge(c, cardest, h, b):
    """Merge pre-hashed elements into one ell-bucket counter.

    ``cardest`` is a length-1 array holding the running HIP estimate.
    Returns the number of elements that changed the counter.
    """
    ell = c.shape[0]
    changed = 0
    for i in range(h.shape[0]):
        j = b[i]
        if h[i] < c[j]:
            total = 0.0
            for t in range(ell):
                total += c[t]
            cardest[0] += ell / total
            c[j] = h[i]
            changed += 1
    return changed


@maybe_njit
def _evict_max_seed(slot_key, seed):
    best = -1
    for s in range(slot_key.shape[0]):
        if slot_key[s] < 0:
            continue
        if best < 0 or seed[s] > seed[best] or (seed[s] == seed[best] and slot_key[s] > slot_key[best]):
            best = s
    return best


@maybe_njit
def ws_update(key_ids, h, b, r, use_r, fixed, k, r_always,
              key_slot, slot_key, c, cardest, seed, tau_entry, f, entered_at,
              free_stack, state_i, state_f):
    """Weighted-sampling cache update for a batch of elements.

    Distinct sampling uses ``use_r=False``: a key is admitted when its pair
    hash falls below the threshold and its seed is the minimum pair hash.
    Combined sampling passes the per-element draws in ``r`` and uses
    ``min(h, r)`` for admission, and folds ``r`` into the seed only when a
    cached key's counter changes, or on every element when ``r_always``
    is set. With ``fixed=True`` the threshold never
    moves and nothing is evicted; the caller must supply enough free slots.
    """
    ell = c.shape[1]
    tau = state_f[TAU]
    n_entries = state_i[N_ENTRIES]
    free_top = state_i[FREE_TOP]
    n_seen = state_i[N_SEEN]
    for i in range(key_ids.shape[0]):
        x = key_ids[i]
        hv = h[i]
        j = b[i]
        m = hv
        if use_r and r[i] < m:
            m = r[i]
        s = key_slot[x]
        if s >= 0:
            f[s] += 1
            if hv < c[s, j]:
                total = 0.0
                for t in range(ell):
                    total += c[s, t]
                cardest[s] += ell / total
                c[s, j] = hv
                if m < seed[s]:
                    seed[s] = m
            elif r_always and m < seed[s]:
                seed[s] = m
        elif m < tau:
            free_top -= 1
            s = free_stack[free_top]
            key_slot[x] = s
            slot_key[s] = x
            for t in range(ell):
                c[s, t] = 1.0
            # the first merge into an empty counter adds ell/ell
            cardest[s] = 1.0
            c[s, j] = hv
            seed[s] = m
            tau_entry[s] = tau
            f[s] = 1
            entered_at[s] = n_seen
            n_entries += 1
            if not fixed and n_entries > k:
                e = _evict_max_seed(slot_key, seed)
                tau = seed[e]
                key_slot[slot_key[e]] = -1
                slot_key[e] = -1
                free_stack[free_top] = e
                free_top += 1
                n_entries -= 1
        n_seen += 1
    state_f[TAU] = tau
    state_i[N_ENTRIES] = n_entries
    state_i[FREE_TOP] = free_top
    state_i[N_SEEN] = n_seen
