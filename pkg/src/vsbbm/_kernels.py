"""Compiled per-chunk particle kernel.

One call evolves ``n_rep`` independent replicas sequentially with a single
generator.  Between consecutive boundary times each alive particle grows
its subtree depth-first with exact exponential clocks; the memoryless
property lets a clock that rings after the boundary be discarded and
redrawn in the next interval.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)

STATUS_OK = 0
STATUS_CAP = 1


@njit(cache=True, nogil=True)
def _variance_at(s, kt, kv):
    n = kt.size
    if s <= kt[0]:
        return kv[0]
    if s >= kt[n - 1]:
        return kv[n - 1]
    j = np.searchsorted(kt, s, side="right") - 1
    return kv[j] + (kv[j + 1] - kv[j]) * (s - kt[j]) / (kt[j + 1] - kt[j])


@njit(cache=True, nogil=True)
def _grow_f(a, need):
    if need <= a.size:
        return a
    b = np.empty(max(need, 2 * a.size), dtype=np.float64)
    b[: a.size] = a
    return b


@njit(cache=True, nogil=True)
def _grow_i(a, need):
    if need <= a.size:
        return a
    b = np.empty(max(need, 2 * a.size), dtype=np.int64)
    b[: a.size] = a
    return b


@njit(cache=True, nogil=True)
def _offspring(gen, cum, kvals):
    if kvals.size == 1:
        return kvals[0]
    u = gen.random()
    j = np.searchsorted(cum, u, side="right")
    if j >= kvals.size:
        j = kvals.size - 1
    return kvals[j]


@njit(cache=True, nogil=True)
def _stats(pos, n, s, out_row, col):
    mx = -np.inf
    z = 0.0
    w = 0.0
    for i in range(n):
        x = pos[i]
        if x > mx:
            mx = x
        d = SQRT2 * s - x
        e = math.exp(-SQRT2 * d)
        w += e
        z += d * e
    out_row[0, col] = n
    out_row[1, col] = mx
    out_row[2, col] = z
    out_row[3, col] = w


@njit(cache=True, nogil=True)
def _advance(gen, t_prev, v_prev, t_next, v_next, kt, kv, cum, kvals, kmax,
             cur_pos, cur_rec, n_alive, i, st_t, st_x, st_v, sp, out_pos, out_rec, n_new):
    """Grow the subtrees of alive particles ``i, i+1, ...`` up to ``t_next``.

    The state ``(i, sp, n_new)`` is returned early, before consuming any
    randomness, when the output or the stack is full; the caller grows the
    buffers and resumes, so results do not depend on buffer sizes.
    """
    while True:
        if n_new >= out_pos.size or sp + kmax > st_t.size:
            return i, sp, n_new
        if sp == 0:
            if i >= n_alive:
                return i, 0, n_new
            st_t[0] = t_prev
            st_x[0] = cur_pos[i]
            st_v[0] = v_prev
            sp = 1
            i += 1
        rec = cur_rec[i - 1]
        sp -= 1
        s0 = st_t[sp]
        x0 = st_x[sp]
        v0 = st_v[sp]
        s1 = s0 + gen.standard_exponential()
        if s1 >= t_next:
            dv = v_next - v0
            out_pos[n_new] = x0 + math.sqrt(dv if dv > 0.0 else 0.0) * gen.standard_normal()
            out_rec[n_new] = rec
            n_new += 1
        else:
            v1 = _variance_at(s1, kt, kv)
            dv = v1 - v0
            x = x0 + math.sqrt(dv if dv > 0.0 else 0.0) * gen.standard_normal()
            k = _offspring(gen, cum, kvals)
            for _ in range(k):
                st_t[sp] = s1
                st_x[sp] = x
                st_v[sp] = v1
                sp += 1


@njit(cache=True, nogil=True)
def run_chunk(gen, n_rep, kt, kv, bounds, is_cp, is_prune, prune_depth, cap, cum, kvals,
              keep_window):
    """Simulate ``n_rep`` replicas.

    Returns ``(status, fin_pos, fin_anc, fin_off, rec_pos, rec_parent, rec_cp,
    rec_off, stats, hist_n, pruned)``.  ``stats`` has shape
    ``(n_rep, 4, n_cp + 1)`` holding count, max, Z and W at every checkpoint
    and at the horizon; ``hist_n`` counts particles at every boundary.
    Record and ancestor indices are local to each replica.
    """
    nb = bounds.size
    n_cp = 0
    for b in range(nb):
        if is_cp[b]:
            n_cp += 1
    stats = np.zeros((n_rep, 4, n_cp + 1))
    hist_n = np.zeros((n_rep, nb), dtype=np.int64)
    pruned = np.zeros(n_rep, dtype=np.int64)
    fin_off = np.zeros(n_rep + 1, dtype=np.int64)
    rec_off = np.zeros(n_rep + 1, dtype=np.int64)
    fin_pos = np.empty(64, dtype=np.float64)
    fin_anc = np.empty(64, dtype=np.int64)
    rec_pos = np.empty(64, dtype=np.float64)
    rec_parent = np.empty(64, dtype=np.int64)
    rec_cp = np.empty(64, dtype=np.int64)
    n_fin = 0
    n_rec = 0

    cur_pos = np.empty(64, dtype=np.float64)
    cur_rec = np.empty(64, dtype=np.int64)
    nxt_pos = np.empty(64, dtype=np.float64)
    nxt_rec = np.empty(64, dtype=np.int64)
    st_t = np.empty(64, dtype=np.float64)
    st_x = np.empty(64, dtype=np.float64)
    st_v = np.empty(64, dtype=np.float64)
    kmax = kvals.max()

    for rep in range(n_rep):
        rec_base = n_rec
        n_alive = 1
        cur_pos[0] = 0.0
        cur_rec[0] = -1
        t_prev = 0.0
        cpi = 0
        for bi in range(nb):
            t_next = bounds[bi]
            v_next = _variance_at(t_next, kt, kv)
            v_prev = _variance_at(t_prev, kt, kv)
            n_new = 0
            i = 0
            sp = 0
            while True:
                i, sp, n_new = _advance(gen, t_prev, v_prev, t_next, v_next, kt, kv, cum, kvals, kmax,
                                        cur_pos, cur_rec, n_alive, i, st_t, st_x, st_v, sp,
                                        nxt_pos, nxt_rec, n_new)
                if sp == 0 and i >= n_alive:
                    break
                if n_new + sp + (n_alive - i) > cap:
                    return (STATUS_CAP, fin_pos[:0], fin_anc[:0], fin_off, rec_pos[:0],
                            rec_parent[:0], rec_cp[:0], rec_off, stats, hist_n, pruned)
                if n_new >= nxt_pos.size:
                    nxt_pos = _grow_f(nxt_pos, n_new + 1)
                    nxt_rec = _grow_i(nxt_rec, n_new + 1)
                if sp + kmax > st_t.size:
                    st_t = _grow_f(st_t, sp + kmax)
                    st_x = _grow_f(st_x, sp + kmax)
                    st_v = _grow_f(st_v, sp + kmax)
            # swap generations
            tmp_p = cur_pos
            cur_pos = nxt_pos
            nxt_pos = tmp_p
            tmp_r = cur_rec
            cur_rec = nxt_rec
            nxt_rec = tmp_r
            n_alive = n_new
            t_prev = t_next
            hist_n[rep, bi] = n_alive

            if is_cp[bi]:
                _stats(cur_pos, n_alive, t_next, stats[rep], cpi)
                rec_pos = _grow_f(rec_pos, n_rec + n_alive)
                rec_parent = _grow_i(rec_parent, n_rec + n_alive)
                rec_cp = _grow_i(rec_cp, n_rec + n_alive)
                for i in range(n_alive):
                    rec_pos[n_rec] = cur_pos[i]
                    rec_parent[n_rec] = cur_rec[i]
                    rec_cp[n_rec] = cpi
                    cur_rec[i] = n_rec - rec_base
                    n_rec += 1
                cpi += 1
            if bi == nb - 1:
                _stats(cur_pos, n_alive, t_next, stats[rep], n_cp)
            elif is_prune[bi] and n_alive > 1:
                mx = cur_pos[:n_alive].max()
                cut = mx - prune_depth
                m = 0
                for i in range(n_alive):
                    if cur_pos[i] >= cut:
                        cur_pos[m] = cur_pos[i]
                        cur_rec[m] = cur_rec[i]
                        m += 1
                pruned[rep] += n_alive - m
                n_alive = m

        # finals, optionally truncated to a window below the maximum
        keep_from = -np.inf
        if keep_window > 0.0 and n_alive > 0:
            keep_from = cur_pos[:n_alive].max() - keep_window
        n_keep = 0
        for i in range(n_alive):
            if cur_pos[i] >= keep_from:
                n_keep += 1
        fin_pos = _grow_f(fin_pos, n_fin + n_keep)
        fin_anc = _grow_i(fin_anc, n_fin + n_keep)
        start = n_fin
        for i in range(n_alive):
            if cur_pos[i] >= keep_from:
                fin_pos[n_fin] = cur_pos[i]
                fin_anc[n_fin] = cur_rec[i]
                n_fin += 1
        if keep_window > 0.0 and n_rec > rec_base:
            # keep only records that are ancestors of retained finals
            nr = n_rec - rec_base
            mark = np.zeros(nr, dtype=np.bool_)
            for f in range(start, n_fin):
                a = fin_anc[f]
                while a >= 0 and not mark[a]:
                    mark[a] = True
                    a = rec_parent[rec_base + a]
            remap = np.full(nr, -1, dtype=np.int64)
            m = 0
            for j in range(nr):
                if mark[j]:
                    remap[j] = m
                    g = rec_base + j
                    par = rec_parent[g]
                    rec_pos[rec_base + m] = rec_pos[g]
                    rec_parent[rec_base + m] = remap[par] if par >= 0 else -1
                    rec_cp[rec_base + m] = rec_cp[g]
                    m += 1
            for f in range(start, n_fin):
                if fin_anc[f] >= 0:
                    fin_anc[f] = remap[fin_anc[f]]
            n_rec = rec_base + m
        fin_off[rep + 1] = n_fin
        rec_off[rep + 1] = n_rec

    return (STATUS_OK, fin_pos[:n_fin].copy(), fin_anc[:n_fin].copy(), fin_off,
            rec_pos[:n_rec].copy(), rec_parent[:n_rec].copy(), rec_cp[:n_rec].copy(),
            rec_off, stats, hist_n, pruned)
