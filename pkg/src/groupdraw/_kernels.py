"""Compiled inner loops for bulk simulation.

Arrays in, arrays out; all instance logic is flattened into tables by
:mod:`groupdraw.simulation`. Nothing here knows team names or labels.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Urns of up to 20 teams take their permutation from a single random integer (20! < 2**63).
FACTORIALS = np.array([math.factorial(k) for k in range(21)], dtype=np.int64)


@njit(cache=True)
def shuffle(arr, n, rng, fact):
    """Uniform in-place permutation of ``arr[:n]`` (Fisher-Yates)."""
    if n < 2:
        return
    if n <= 20:
        r = rng.integers(0, fact[n])
        for i in range(n - 1, 0, -1):
            j = r % (i + 1)
            r //= i + 1
            tmp = arr[i]
            arr[i] = arr[j]
            arr[j] = tmp
    else:
        for i in range(n - 1, 0, -1):
            j = rng.integers(0, i + 1)
            tmp = arr[i]
            arr[i] = arr[j]
            arr[j] = tmp


@njit(cache=True)
def _record(groups, weights, pair_counts):
    """Add one complete draw (``groups[g, p]`` = team) to the pair counts; returns its weight."""
    G, P = groups.shape
    w = 0.0
    for g in range(G):
        for x in range(P):
            i = groups[g, x]
            for y in range(x + 1, P):
                j = groups[g, y]
                pair_counts[i, j] += 1
                pair_counts[j, i] += 1
                w += weights[i, j]
    return w


# --- unconstrained draws, grouped by satisfied-constraint pattern ------------------


@njit(cache=True)
def rejection_block(
    rng, n_draws, pot_teams, member, lo, hi, bits, weights, fact,
    pair_counts, pattern_draws, psi_sum, psi_min, psi_max,
):
    """Uniform unconstrained draws, accumulated per pattern of satisfied constraints.

    ``member[t, c]`` is 1 if team ``t`` counts towards constraint ``c``; a
    draw satisfies ``c`` when every group holds between ``lo[c]`` and
    ``hi[c]`` such teams, and its pattern is the OR of ``bits[c]`` over the
    satisfied constraints. ``pair_counts[pattern]`` etc. are updated in place.
    """
    P, G = pot_teams.shape
    C = member.shape[1]
    urns = pot_teams.copy()
    groups = np.empty((G, P), dtype=np.int64)
    counts = np.zeros((G, C), dtype=np.int64)
    for _ in range(n_draws):
        for p in range(P):
            shuffle(urns[p], G, rng, fact)
            for g in range(G):
                groups[g, p] = urns[p, g]
        counts[:, :] = 0
        for g in range(G):
            for p in range(P):
                t = groups[g, p]
                for c in range(C):
                    counts[g, c] += member[t, c]
        pattern = 0
        for c in range(C):
            ok = True
            for g in range(G):
                if counts[g, c] < lo[c] or counts[g, c] > hi[c]:
                    ok = False
                    break
            if ok:
                pattern |= bits[c]
        w = _record(groups, weights, pair_counts[pattern])
        pattern_draws[pattern] += 1
        psi_sum[pattern] += w
        if w < psi_min[pattern]:
            psi_min[pattern] = w
        if w > psi_max[pattern]:
            psi_max[pattern] = w


# --- Skip mechanism -----------------------------------------------------------------
#
# A partial draw is summarised by the position ``q`` of the pot being drawn,
# the class counts still in that urn, and for every group a descriptor
# ``code * 2 + flag``: ``code`` encodes the group's capped counts of bounded
# confederations and ``flag`` marks a group already served by pot ``q``.
# Sorted descriptors plus (q, urn counts) are packed into two int64 words
# and used as the memo key of the completion search.


@njit(cache=True, inline="always")
def _pack(codes, flags, q, rem, desc_bits, count_bits, scratch):
    G = codes.size
    for g in range(G):
        v = codes[g] * 2 + flags[g]
        h = g
        while h > 0 and scratch[h - 1] > v:
            scratch[h] = scratch[h - 1]
            h -= 1
        scratch[h] = v
    w0 = 0
    for g in range(G):
        w0 |= scratch[g] << (desc_bits * g)
    w1 = q
    shift = 4
    for k in range(rem.size):
        w1 |= rem[k] << shift
        shift += count_bits
    return w0, w1


# Open-addressing memo: ``keys[slot]`` holds (w0, w1), ``vals[slot]`` is
# 0 for an empty slot, 1 for infeasible and 2 for feasible; ``fill[0]``
# counts used slots. The capacity is a power of two.


@njit(cache=True, inline="always")
def _slot(keys, vals, w0, w1):
    mask = vals.size - 1
    h = (w0 * -7046029254386353131 + w1 * -4658895280553007687) & 0x7FFFFFFFFFFFFFFF
    h ^= h >> 29
    i = h & mask
    while vals[i] != 0 and (keys[i, 0] != w0 or keys[i, 1] != w1):
        i = (i + 1) & mask
    return i


@njit(cache=True)
def grow_memo(keys, vals, capacity):
    """Rehash a memo into ``capacity`` slots."""
    new_keys = np.zeros((capacity, 2), dtype=np.int64)
    new_vals = np.zeros(capacity, dtype=np.int8)
    for i in range(vals.size):
        if vals[i] != 0:
            j = _slot(new_keys, new_vals, keys[i, 0], keys[i, 1])
            new_keys[j, 0] = keys[i, 0]
            new_keys[j, 1] = keys[i, 1]
            new_vals[j] = vals[i]
    return new_keys, new_vals


@njit(cache=True)
def _hopeless(codes, flags, q, rem, pot_counts, class_has, need, min_codes):
    P = pot_counts.shape[0]
    G = codes.size
    nk = rem.size
    for m in range(min_codes.size):
        ci = min_codes[m]
        total_supply = 0
        cur = 0
        for k in range(nk):
            cur += rem[k] * class_has[k, ci]
        total_supply += cur
        later_open = 0
        for r in range(q + 1, P):
            s = 0
            for k in range(nk):
                s += pot_counts[r, k] * class_has[k, ci]
            total_supply += s
            if s > 0:
                later_open += 1
        total_deficit = 0
        for g in range(G):
            deficit = need[codes[g], ci]
            if deficit <= 0:
                continue
            total_deficit += deficit
            open_pots = later_open
            if cur > 0 and flags[g] == 0:
                open_pots += 1
            if deficit > open_pots:
                return True
        if total_deficit > total_supply:
            return True
    return False


@njit(cache=True, inline="always")
def _total(arr):
    # Explicit loop: ndarray.sum() costs far more on tiny arrays in compiled code.
    t = 0
    for x in range(arr.size):
        t += arr[x]
    return t


@njit(cache=True)
def _store(keys, vals, fill, w0, w1, result):
    # Past 7/8 load the memo stops growing; the caller enlarges it between draws.
    if 8 * fill[0] >= 7 * vals.size:
        return
    i = _slot(keys, vals, w0, w1)
    if vals[i] == 0:
        keys[i, 0] = w0
        keys[i, 1] = w1
        vals[i] = 2 if result else 1
        fill[0] += 1


@njit(cache=True, inline="always")
def _complete_ok(codes, need, min_codes):
    for g in range(codes.size):
        for m in range(min_codes.size):
            if need[codes[g], min_codes[m]] > 0:
                return False
    return True


@njit(cache=True)
def _next_candidate(codes, flags, trans, k, start):
    for g in range(start, codes.size):
        if flags[g] or trans[codes[g], k] < 0:
            continue
        dup = False
        for h in range(g):
            if flags[h] == 0 and codes[h] == codes[g]:
                dup = True
                break
        if not dup:
            return g
    return -1


@njit(cache=True, inline="always")
def feasible(codes, flags, q, rem, pot_counts, trans, class_has, need, min_codes,
             desc_bits, count_bits, keys, vals, fill, scratch):
    """True iff the partial draw can be completed without breaking any bound.

    Depth-first search with an explicit stack: the team to place next is
    the first remaining class of the current pot, tried in every distinct
    open group. ``codes``, ``flags`` and ``rem`` are restored on return.
    """
    G = codes.size
    P = pot_counts.shape[0]
    if _total(rem) == 0:
        if q + 1 == P:
            return _complete_ok(codes, need, min_codes)
        flags = np.zeros(G, dtype=np.int64)
        rem = pot_counts[q + 1].copy()
        q += 1
    return _lookup(codes, flags, q, rem, pot_counts, trans, class_has, need, min_codes,
                   desc_bits, count_bits, keys, vals, fill, scratch)


@njit(cache=True, inline="always")
def _lookup(codes, flags, q, rem, pot_counts, trans, class_has, need, min_codes,
            desc_bits, count_bits, keys, vals, fill, scratch):
    """Memo hit, or a fresh search from a state whose current urn is not empty."""
    w0, w1 = _pack(codes, flags, q, rem, desc_bits, count_bits, scratch)
    i = _slot(keys, vals, w0, w1)
    if vals[i] != 0:
        return vals[i] == 2
    return _search(codes, flags, q, rem, w0, w1, pot_counts, trans, class_has, need,
                   min_codes, desc_bits, count_bits, keys, vals, fill, scratch)


@njit(cache=True)
def _search(codes, flags, q, rem, w0, w1, pot_counts, trans, class_has, need, min_codes,
            desc_bits, count_bits, keys, vals, fill, scratch):
    G = codes.size
    P = pot_counts.shape[0]
    nk = rem.size
    if _hopeless(codes, flags, q, rem, pot_counts, class_has, need, min_codes):
        _store(keys, vals, fill, w0, w1, False)
        return False

    depth_max = pot_counts.sum() + 2
    fq = np.empty(depth_max, dtype=np.int64)
    fk = np.empty(depth_max, dtype=np.int64)
    fg = np.empty(depth_max, dtype=np.int64)
    fold = np.empty(depth_max, dtype=np.int64)
    fadv = np.zeros(depth_max, dtype=np.int64)
    fw = np.empty((depth_max, 2), dtype=np.int64)
    saved_flags = np.empty((depth_max, G), dtype=np.int64)
    saved_rem = np.empty((depth_max, nk), dtype=np.int64)

    depth = 0
    fq[0] = q
    fw[0, 0] = w0
    fw[0, 1] = w1
    k = 0
    while rem[k] == 0:
        k += 1
    fk[0] = k
    rem[k] -= 1
    fg[0] = -1
    child = -1  # result handed back to the frame on top: -1 none, 0 false, 1 true
    while depth >= 0:
        d = depth
        q = fq[d]
        k = fk[d]
        if child >= 0:
            g = fg[d]
            if fadv[d]:
                flags[:] = saved_flags[d]
                rem[:] = saved_rem[d]
            codes[g] = fold[d]
            flags[g] = 0
            if child == 1:
                rem[k] += 1
                _store(keys, vals, fill, fw[d, 0], fw[d, 1], True)
                depth -= 1
                continue
        child = -1
        g = _next_candidate(codes, flags, trans, k, fg[d] + 1)
        if g < 0:
            rem[k] += 1
            _store(keys, vals, fill, fw[d, 0], fw[d, 1], False)
            depth -= 1
            child = 0
            continue
        fg[d] = g
        fold[d] = codes[g]
        codes[g] = trans[codes[g], k]
        flags[g] = 1
        fadv[d] = 0
        cq = q
        if _total(rem) == 0:
            if q + 1 == P:
                child = 1 if _complete_ok(codes, need, min_codes) else 0
                continue
            saved_flags[d] = flags
            saved_rem[d] = rem
            flags[:] = 0
            rem[:] = pot_counts[q + 1]
            fadv[d] = 1
            cq = q + 1
        w0, w1 = _pack(codes, flags, cq, rem, desc_bits, count_bits, scratch)
        i = _slot(keys, vals, w0, w1)
        if vals[i] != 0:
            child = 1 if vals[i] == 2 else 0
            continue
        if _hopeless(codes, flags, cq, rem, pot_counts, class_has, need, min_codes):
            _store(keys, vals, fill, w0, w1, False)
            child = 0
            continue
        depth += 1
        fq[depth] = cq
        fw[depth, 0] = w0
        fw[depth, 1] = w1
        k = 0
        while rem[k] == 0:
            k += 1
        fk[depth] = k
        rem[k] -= 1
        fg[depth] = -1
    return child == 1


@njit(cache=True)
def place_order(order, urn_sizes, pot_of_position, team_class, pot_counts, trans,
                class_has, need, min_codes, desc_bits, count_bits, host, keys, vals, fill,
                groups):
    """Skip placement of teams drawn in ``order[q, :urn_sizes[q]]``, written to ``groups[g, pot]``.

    Returns the number of skipped placements, -1 if a drawn team found no
    group, or -2 if the memo passed its load limit (nothing is recorded;
    the caller retries with a larger memo).
    """
    P = order.shape[0]
    G = groups.shape[0]
    codes = np.zeros(G, dtype=np.int64)
    flags = np.zeros(G, dtype=np.int64)
    scratch = np.empty(G, dtype=np.int64)
    fresh_flags = np.zeros(G, dtype=np.int64)
    fresh_rem = np.empty(pot_counts.shape[1], dtype=np.int64)
    limit = (vals.size * 3) // 4
    groups[:, :] = -1
    if host >= 0:
        codes[0] = trans[0, team_class[host]]
        flags[0] = 1
        groups[0, pot_of_position[0]] = host
    skips = 0
    for q in range(P):
        if q > 0:
            flags[:] = 0
        rem = pot_counts[q].copy()
        pot = pot_of_position[q]
        for x in range(urn_sizes[q]):
            t = order[q, x]
            k = team_class[t]
            rem[k] -= 1
            placed = False
            first = -1
            for g in range(G):
                if flags[g]:
                    continue
                if first < 0:
                    first = g
                nc = trans[codes[g], k]
                if nc < 0:
                    continue
                old = codes[g]
                codes[g] = nc
                flags[g] = 1
                # The memo lookup is spelled out here: this is the hot path.
                if x + 1 < urn_sizes[q]:
                    ok = _lookup(codes, flags, q, rem, pot_counts, trans, class_has, need,
                                 min_codes, desc_bits, count_bits, keys, vals, fill, scratch)
                elif q + 1 == P:
                    ok = _complete_ok(codes, need, min_codes)
                else:
                    fresh_rem[:] = pot_counts[q + 1]
                    ok = _lookup(codes, fresh_flags, q + 1, fresh_rem, pot_counts, trans,
                                 class_has, need, min_codes, desc_bits, count_bits, keys,
                                 vals, fill, scratch)
                if ok:
                    groups[g, pot] = t
                    if g != first:
                        skips += 1
                    placed = True
                    break
                codes[g] = old
                flags[g] = 0
            if not placed:
                return -1
    if fill[0] > limit:
        return -2
    return skips


@njit(cache=True)
def skip_block(
    rng, n_draws, urns, urn_sizes, pot_of_position, team_class, pot_counts, trans,
    class_has, need, min_codes, desc_bits, count_bits, host, weights, fact, keys, vals, fill,
    pair_counts, out_groups,
):
    """Skip draws with full lookahead over shuffled urns.

    ``urns[q, :urn_sizes[q]]`` are the teams drawn at pot position ``q``;
    ``host >= 0`` is pre-placed in group 0 at position 0. Returns
    (status, skip count, psi sum, psi min, psi max); status -1 means a drawn
    team found no group and -2 that the memo needs to grow. When
    ``out_groups`` has rows, draw ``d`` is also written there as
    ``out_groups[d, g, pot]``.
    """
    P = urns.shape[0]
    G = urns.shape[1]
    keep = out_groups.shape[0]
    groups = np.empty((G, P), dtype=np.int64)
    order = urns.copy()
    skips = 0
    psi_sum = 0.0
    psi_min = np.inf
    psi_max = -np.inf
    for d in range(n_draws):
        for q in range(P):
            shuffle(order[q], urn_sizes[q], rng, fact)
        n = place_order(order, urn_sizes, pot_of_position, team_class, pot_counts, trans,
                        class_has, need, min_codes, desc_bits, count_bits, host, keys, vals,
                        fill, groups)
        if n < 0:
            return n, skips, psi_sum, psi_min, psi_max
        skips += n
        w = _record(groups, weights, pair_counts)
        psi_sum += w
        if w < psi_min:
            psi_min = w
        if w > psi_max:
            psi_max = w
        if d < keep:
            out_groups[d] = groups
    return 0, skips, psi_sum, psi_min, psi_max
