"""Jit-compiled hot loops backing the Rips reduction.

Everything here is deterministic scalar arithmetic; numba only buys speed.
Triangles travel as packed int64 keys: the rank of the triangle's longest
edge (ties among equal-length longest edges resolved to the largest rank)
shifted left, OR'd with the vertex code (t0*n + t1)*n + t2, t0 < t1 < t2.
Edge ranks refine length order, so key order is a total simplexwise order
refining filtration value; the reported pairing values never depend on the
tie-break chosen, only the internal column bookkeeping does.
"""

import numba as nb
import numpy as np
from numba.typed import Dict, List
from numba import types

INT_ARRAY = types.int64[::1]


@nb.njit(cache=True)
def kruskal_positions(ei, ej, n):
    """Positions (into edge arrays sorted ascending) of the MST edges.

    Edges must arrive pre-sorted by (length, i, j); ties then resolve the
    same way every run. Path-halving union-find, early exit once spanning.
    """
    parent = np.arange(n)
    out = np.empty(n - 1, np.int64)
    cnt = 0
    for e in range(ei.shape[0]):
        ri = ei[e]
        while parent[ri] != ri:
            parent[ri] = parent[parent[ri]]
            ri = parent[ri]
        rj = ej[e]
        while parent[rj] != rj:
            parent[rj] = parent[parent[rj]]
            rj = parent[rj]
        if ri != rj:
            parent[ri] = rj
            out[cnt] = e
            cnt += 1
            if cnt == n - 1:
                break
    return out[:cnt]


@nb.njit(cache=True)
def empty_lune_mask(dm, ei, ej, ev, candidate):
    """Mark candidate edges whose lune is empty.

    The lune of edge (i, j) is the set of vertices k with
    max(d(i,k), d(j,k)) <= d(i,j); a nonempty lune means the edge gains a
    cofacet triangle at its own filtration value. Early exit on first hit
    keeps this near O(E) on clustered clouds.
    """
    E = ei.shape[0]
    n = dm.shape[0]
    out = np.zeros(E, np.bool_)
    for e in range(E):
        if not candidate[e]:
            continue
        i = ei[e]
        j = ej[e]
        d = ev[e]
        empty = True
        for k in range(n):
            if k == i or k == j:
                continue
            a = dm[i, k]
            if a > d:
                continue
            if dm[j, k] <= d:
                empty = False
                break
        out[e] = empty
    return out


@nb.njit(inline="always")
def _tri_code(i, j, k, n):
    # sort the triple, then pack base-n
    if i > j:
        i, j = j, i
    if j > k:
        j, k = k, j
    if i > j:
        i, j = j, i
    return (i * n + j) * n + k


@nb.njit(inline="always")
def _tri_key(i, j, k, v, d, a, b, rank_of, n, shift):
    # i < j is the base edge (length d), k the apex (legs a, b), v the max
    kr = np.int64(-1)
    if d == v:
        r = rank_of[i, j]
        if r > kr:
            kr = r
    if a == v:
        r = rank_of[i, k]
        if r > kr:
            kr = r
    if b == v:
        r = rank_of[j, k]
        if r > kr:
            kr = r
    return (kr << shift) | _tri_code(i, j, k, n)


@nb.njit
def _count_cofacets(dm, i, j, d, r_enc, n):
    m = 0
    row_i = dm[i]
    row_j = dm[j]
    for k in range(n):
        if k == i or k == j:
            continue
        a = row_i[k]
        b = row_j[k]
        v = a if a > b else b
        if v < d:
            v = d
        if v <= r_enc:
            m += 1
    return m


@nb.njit
def _ensure_stream(rank, dm, ei, ej, ev, rank_of, r_enc, shift,
                   s_start, s_len, pool, pool_used):
    """Build edge rank's sorted cofacet stream into the pool if absent.

    A stream lists the packed keys of the triangles over edge rank with
    diameter at most r_enc, ascending; that agrees with the global triangle
    order restricted to the stream. Returns the possibly-regrown pool and
    its new fill level.
    """
    if s_start[rank] >= 0:
        return pool, pool_used
    n = dm.shape[0]
    i = ei[rank]
    j = ej[rank]
    d = ev[rank]
    m = _count_cofacets(dm, i, j, d, r_enc, n)
    while pool_used + m > pool.shape[0]:
        grown = np.empty(pool.shape[0] * 2, np.int64)
        grown[:pool_used] = pool[:pool_used]
        pool = grown
    row_i = dm[i]
    row_j = dm[j]
    t = pool_used
    for k in range(n):
        if k == i or k == j:
            continue
        a = row_i[k]
        b = row_j[k]
        v = a if a > b else b
        if v < d:
            v = d
        if v <= r_enc:
            pool[t] = _tri_key(i, j, k, v, d, a, b, rank_of, n, shift)
            t += 1
    seg = pool[pool_used:t]
    seg.sort()
    s_start[rank] = pool_used
    s_len[rank] = m
    return pool, t


@nb.njit
def _min_cofacet(dm, rank_of, i, j, d, r_enc, n, shift):
    """Smallest cofacet key of edge (i, j), or -1 when none exists."""
    best = np.int64(-1)
    row_i = dm[i]
    row_j = dm[j]
    for k in range(n):
        if k == i or k == j:
            continue
        a = row_i[k]
        b = row_j[k]
        v = a if a > b else b
        if v < d:
            v = d
        if v > r_enc:
            continue
        key = _tri_key(i, j, k, v, d, a, b, rank_of, n, shift)
        if best < 0 or key < best:
            best = key
    return best


@nb.njit
def _claimant(key, cur_rank, dm, ev, rank_of, positive, processed, r_enc, n, shift):
    """Rank of the never-materialized column whose pivot is this triangle.

    -1 when unclaimed, -2 on ambiguity (two facets both claim it), which the
    duplicate-length screening upstream rules out. Only a facet edge whose
    length equals the triangle's value can own it at zero persistence, and
    only when the triangle is that edge's minimal cofacet.
    """
    code = key & ((np.int64(1) << shift) - 1)
    v = ev[key >> shift]
    t2 = code % n
    rest = code // n
    t1 = rest % n
    t0 = rest // n
    found = np.int64(-1)
    for f in range(3):
        if f == 0:
            a, b = t0, t1
        elif f == 1:
            a, b = t0, t2
        else:
            a, b = t1, t2
        if dm[a, b] != v:
            continue
        cr = rank_of[a, b]
        if cr <= cur_rank or not positive[cr] or processed[cr]:
            continue
        if _min_cofacet(dm, rank_of, a, b, v, r_enc, n, shift) == key:
            if found >= 0:
                return np.int64(-2)
            found = cr
    return found


@nb.njit(inline="always")
def _sift_down(h, size):
    # 4-ary heap, nodes interleaved as (key, aux) pairs: all four children of
    # one node share a cache line, and depth halves versus binary
    idx = 0
    key = h[0]
    aux = h[1]
    while True:
        base = 4 * idx + 1
        if base >= size:
            break
        stop = base + 4
        if stop > size:
            stop = size
        best = base
        bk = h[2 * base]
        c = base + 1
        while c < stop:
            ck = h[2 * c]
            if ck < bk:
                best = c
                bk = ck
            c += 1
        if bk < key:
            h[2 * idx] = bk
            h[2 * idx + 1] = h[2 * best + 1]
            idx = best
        else:
            break
    h[2 * idx] = key
    h[2 * idx + 1] = aux


@nb.njit(inline="always")
def _heap_push(h, size, key, aux):
    idx = size
    while idx > 0:
        par = (idx - 1) >> 2
        pk = h[2 * par]
        if key < pk:
            h[2 * idx] = pk
            h[2 * idx + 1] = h[2 * par + 1]
            idx = par
        else:
            break
    h[2 * idx] = key
    h[2 * idx + 1] = aux
    return size + 1


@nb.njit
def _grown(h, size, cap):
    """Double heap capacity when full; returns the (possibly new) array."""
    if size < cap:
        return h, cap
    cap2 = cap * 2
    h2 = np.empty(2 * cap2, np.int64)
    h2[: 2 * size] = h[: 2 * size]
    return h2, cap2


@nb.njit(inline="always")
def _seek_past(pool, start, length, key):
    """First stream position strictly after key."""
    lo = 0
    hi = length
    while lo < hi:
        mid = (lo + hi) >> 1
        if pool[start + mid] <= key:
            lo = mid + 1
        else:
            hi = mid
    return lo


@nb.njit(cache=True)
def reduce_h1_columns(dm, ei, ej, ev, rank_of, positive, processed, process_desc, r_enc):
    """Pair every column in process_desc (descending filtration order).

    Columns are edges, entries cofacet triangles; the working column is a
    heap merging lazily-built sorted cofacet streams, one per edge whose raw
    column has been XORed in, with XOR multiplicity carried as pop parity.
    Pivots owned by never-materialized edges are reconstructed on demand
    from the pivot triangle's same-length facet; pivots owned by earlier
    explicit columns replay that column's stored recipe (the flat set of raw
    edge columns it reduced to) from just past the pivot, which is exact
    because a recipe's prefix below its own pivot cancels evenly.

    Returns (birth_ranks, death_values, death_codes, count, status); status
    is 0 for a valid reduction, negative on an internal consistency failure.
    """
    n = dm.shape[0]
    n_edges = ev.shape[0]
    ncols = process_desc.shape[0]
    shift = np.int64(0)
    full = np.int64(n) * np.int64(n) * np.int64(n) - 1
    while full > 0:
        shift += 1
        full >>= 1
    code_mask = (np.int64(1) << shift) - 1
    pos_bits = np.int64(0)
    full = np.int64(n)
    while full > 0:
        pos_bits += 1
        full >>= 1
    pos_mask = (np.int64(1) << pos_bits) - 1

    s_start = np.full(n_edges, -1, np.int64)
    s_len = np.zeros(n_edges, np.int64)
    pool = np.empty(1 << 16, np.int64)
    pool_used = 0
    claims = Dict.empty(types.int64, types.int64)
    recipes = List.empty_list(INT_ARRAY)
    out_rank = np.empty(ncols, np.int64)
    out_death = np.empty(ncols, np.float64)
    out_code = np.empty(ncols, np.int64)
    count = 0

    # XOR parity of each raw edge column in the working column, plus the
    # touch list that lets the next column reset it without a full sweep
    par = np.zeros(n_edges, np.uint8)
    touched = np.empty(n_edges, np.int64)

    cap = 1 << 14
    h = np.empty(2 * cap, np.int64)

    for idx in range(ncols):
        r = process_desc[idx]
        n_touched = 1
        touched[0] = r
        par[r] = 1
        size = 0
        pool, pool_used = _ensure_stream(
            r, dm, ei, ej, ev, rank_of, r_enc, shift, s_start, s_len, pool, pool_used
        )
        if s_len[r] > 0:
            size = _heap_push(h, size, pool[s_start[r]], r << pos_bits)
        while True:
            if size == 0:
                # no death below the enclosing radius: impossible for a valid
                # filtration, flag and bail out
                return out_rank[:count], out_death[:count], out_code[:count], count, -1
            key = h[0]
            parity = 0
            while size > 0 and h[0] == key:
                aux = h[1]
                s = aux >> pos_bits
                p = (aux & pos_mask) + 1
                parity ^= 1
                if p < s_len[s]:
                    # replace-top with the stream's successor, one sift
                    h[0] = pool[s_start[s] + p]
                    h[1] = aux + 1
                    _sift_down(h, size)
                else:
                    size -= 1
                    if size > 0:
                        h[0] = h[2 * size]
                        h[1] = h[2 * size + 1]
                        _sift_down(h, size)
            if parity == 0:
                continue
            if key in claims:
                rec = recipes[claims[key]]
                for t in range(rec.shape[0]):
                    cr = rec[t]
                    if par[cr] == 0:
                        if n_touched == touched.shape[0]:
                            tg = np.empty(2 * n_touched, np.int64)
                            tg[:n_touched] = touched
                            touched = tg
                        touched[n_touched] = cr
                        n_touched += 1
                    par[cr] ^= 1
                    pool, pool_used = _ensure_stream(
                        cr, dm, ei, ej, ev, rank_of, r_enc, shift,
                        s_start, s_len, pool, pool_used,
                    )
                    pos = _seek_past(pool, s_start[cr], s_len[cr], key)
                    if pos < s_len[cr]:
                        h, cap = _grown(h, size, cap)
                        size = _heap_push(h, size, pool[s_start[cr] + pos], (cr << pos_bits) | pos)
                continue
            cl = _claimant(key, r, dm, ev, rank_of, positive, processed, r_enc, n, shift)
            if cl == -2:
                return out_rank[:count], out_death[:count], out_code[:count], count, -2
            if cl >= 0:
                if par[cl] == 0:
                    if n_touched == touched.shape[0]:
                        tg = np.empty(2 * n_touched, np.int64)
                        tg[:n_touched] = touched
                        touched = tg
                    touched[n_touched] = cl
                    n_touched += 1
                par[cl] ^= 1
                pool, pool_used = _ensure_stream(
                    cl, dm, ei, ej, ev, rank_of, r_enc, shift,
                    s_start, s_len, pool, pool_used,
                )
                pos = _seek_past(pool, s_start[cl], s_len[cl], key)
                if pos < s_len[cl]:
                    h, cap = _grown(h, size, cap)
                    size = _heap_push(h, size, pool[s_start[cl] + pos], (cl << pos_bits) | pos)
                continue
            # terminal: record the recipe and, if persistence is nonzero, the
            # pair; clearing parity as ranks are collected dedupes the touch
            # list, which may hold a rank once per 0->1 flip
            rec_buf = np.empty(n_touched, np.int64)
            t2 = 0
            for t in range(n_touched):
                x = touched[t]
                if par[x] == 1:
                    rec_buf[t2] = x
                    t2 += 1
                    par[x] = 0
            rec = rec_buf[:t2].copy()
            rec.sort()
            claims[key] = len(recipes)
            recipes.append(rec)
            v = ev[key >> shift]
            if v > ev[r]:
                out_rank[count] = r
                out_death[count] = v
                out_code[count] = key & code_mask
                count += 1
            break
        for t in range(n_touched):
            par[touched[t]] = 0
    return out_rank[:count], out_death[:count], out_code[:count], count, 0
