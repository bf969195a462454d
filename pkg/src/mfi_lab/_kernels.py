"""Compiled hot loops for the graphical hardcore construction.

Two entry points: a CSR-bucketed acceptance sweep for full realizations, and
a batched incremental replay that re-decides only the causal future of a
block resample (epoch-stamped dirty flags, one global time-ordered pass per
resample).  Both implement the same acceptance rule as the pure-python
oracle; time ties are broken by the precomputed global order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["GridCSR", "build_grid", "accept_sweep_fast", "replay_cover_batch"]


@njit(cache=True)
def _csr_sweep(pos, times, order, cell_key, bucket_start, bucket_items,
               span, lo, R):
    n, d = pos.shape
    accepted = np.zeros(n, dtype=np.bool_)
    r2 = 4.0 * R * R
    for oi in range(n):
        i = order[oi]
        p = pos[i]
        ok = True
        for o in range(3 ** d):
            rem = o
            target = np.int64(0)
            valid = True
            for a in range(d):
                step = rem % 3 - 1
                rem //= 3
                c = (cell_key[i, a] - lo[a]) + step
                if c < 0 or c >= span[a]:
                    valid = False
                    break
                target = target * span[a] + c
            if not valid:
                continue
            for t in range(bucket_start[target], bucket_start[target + 1]):
                j = bucket_items[t]
                if not accepted[j]:
                    continue
                dist2 = 0.0
                for a in range(d):
                    delta = p[a] - pos[j, a]
                    dist2 += delta * delta
                if dist2 <= r2:
                    ok = False
                    break
            if not ok:
                break
        accepted[i] = ok
    return accepted


def _grid_arrays(pos: np.ndarray, cell: float):
    icell = np.floor(pos / cell).astype(np.int64)
    lo = icell.min(axis=0) - 1
    hi = icell.max(axis=0) + 1
    span = hi - lo + 1
    flat = np.zeros(len(pos), dtype=np.int64)
    for a in range(pos.shape[1]):
        flat = flat * span[a] + (icell[:, a] - lo[a])
    n_cells = int(np.prod(span))
    counts = np.bincount(flat, minlength=n_cells)
    bucket_start = np.zeros(n_cells + 1, dtype=np.int64)
    np.cumsum(counts, out=bucket_start[1:])
    bucket_items = np.argsort(flat, kind="stable").astype(np.int64)
    return icell, flat, bucket_start, bucket_items, span, lo


class GridCSR:
    """Uniform-grid index over a fixed point set (cell size 2R)."""

    def __init__(self, pos: np.ndarray, times: np.ndarray, order: np.ndarray, R: float):
        self.pos = np.ascontiguousarray(pos, dtype=np.float64)
        self.times = np.ascontiguousarray(times, dtype=np.float64)
        self.order = np.ascontiguousarray(order, dtype=np.int64)
        self.rank = np.empty(len(order), dtype=np.int64)
        self.rank[self.order] = np.arange(len(order))
        self.R = float(R)
        cell = 2.0 * R
        (self.icell, self.flat_key, self.bucket_start, self.bucket_items,
         self.span, self.lo) = _grid_arrays(self.pos.reshape(len(times), -1), cell)


def build_grid(pos, times, order, R) -> GridCSR:
    return GridCSR(pos, times, order, R)


def accept_sweep_fast(pos: np.ndarray, times: np.ndarray, order: np.ndarray,
                      R: float) -> np.ndarray:
    """Compiled acceptance sweep in the given (time, tie-broken) order."""
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    n = len(times)
    if n == 0:
        return np.zeros(0, dtype=bool)
    icell, _, bucket_start, bucket_items, span, lo = _grid_arrays(pos, 2.0 * R)
    return _csr_sweep(pos, np.ascontiguousarray(times, dtype=np.float64),
                      np.ascontiguousarray(order, dtype=np.int64), icell,
                      bucket_start, bucket_items, span, lo, float(R))


@njit(cache=True)
def _mark_later_dirty(q, tq, rank_q, pos, times, rank, keep, icell, bucket_start,
                      bucket_items, span, lo, r2, dirty_stamp, stamp):
    """Flag base points within 2R of q that come later in the order."""
    d = pos.shape[1]
    for o in range(3 ** d):
        rem = o
        target = np.int64(0)
        valid = True
        for a in range(d):
            step = rem % 3 - 1
            rem //= 3
            c = icell[a] + step
            if c < 0 or c >= span[a]:
                valid = False
                break
            target = target * span[a] + c
        if not valid:
            continue
        for t in range(bucket_start[target], bucket_start[target + 1]):
            j = bucket_items[t]
            if not keep[j]:
                continue
            later = rank[j] > rank_q if rank_q >= 0 else times[j] > tq
            if not later:
                continue
            dist2 = 0.0
            for a in range(d):
                delta = q[a] - pos[j, a]
                dist2 += delta * delta
            if dist2 <= r2:
                dirty_stamp[j] = stamp


@njit(cache=True)
def _cell_index(p, lo, span, cell):
    d = p.shape[0]
    out = np.empty(d, dtype=np.int64)
    for a in range(d):
        c = np.int64(np.floor(p[a] / cell)) - lo[a]
        if c < 0:
            c = 0
        if c >= span[a]:
            c = span[a] - 1
        out[a] = c
    return out


@njit(cache=True)
def _update_cover(counts, sites, p, ball_r, delta_sign):
    br2 = ball_r * ball_r
    for j in range(sites.shape[0]):
        dist2 = 0.0
        for a in range(sites.shape[1]):
            dd = p[a] - sites[j, a]
            dist2 += dd * dd
        if dist2 <= br2:
            counts[j] += delta_sign


@njit(cache=True)
def _replay_cover_batch(pos, times, order, rank, base_acc, icell, bucket_start,
                        bucket_items, span, lo, R, keep, new_pos, new_times,
                        offsets, sites, ball_r, base_counts):
    n, d = pos.shape
    K = len(offsets) - 1
    n_sites = sites.shape[0]
    covered = np.zeros((K, n_sites), dtype=np.bool_)
    changed_any = np.zeros(K, dtype=np.bool_)
    r2 = 4.0 * R * R
    cell = 2.0 * R
    dirty_stamp = np.full(n, -1, dtype=np.int64)
    status_stamp = np.full(n, -1, dtype=np.int64)
    status_val = np.zeros(n, dtype=np.bool_)
    max_new = 0
    for k in range(K):
        if offsets[k + 1] - offsets[k] > max_new:
            max_new = offsets[k + 1] - offsets[k]
    new_acc_pos = np.empty((max_new, d))
    new_acc_t = np.empty(max_new)
    counts = np.empty(n_sites, dtype=np.int64)

    for k in range(K):
        for j in range(n_sites):
            counts[j] = base_counts[j]
        s, e = offsets[k], offsets[k + 1]
        m = e - s
        # seed: removed accepted points free their causal future
        for i in range(n):
            if not keep[i] and base_acc[i]:
                _mark_later_dirty(pos[i], times[i], rank[i], pos, times, rank, keep,
                                  icell[i] - lo, bucket_start, bucket_items, span, lo,
                                  r2, dirty_stamp, k)
                _update_cover(counts, sites, pos[i], ball_r, -1)
                changed_any[k] = True
        nsort = np.argsort(new_times[s:e], kind="mergesort")
        n_new_acc = 0
        bi = 0
        ni = 0
        while bi < n or ni < m:
            take_new = False
            if bi >= n:
                take_new = True
            elif ni < m:
                if new_times[s + nsort[ni]] < times[order[bi]]:
                    take_new = True
            if take_new:
                jn = s + nsort[ni]
                ni += 1
                p = new_pos[jn]
                tp = new_times[jn]
                blocked = False
                # earlier accepted base neighbors (modified statuses)
                ic = _cell_index(p, lo, span, cell)
                for o in range(3 ** d):
                    rem = o
                    target = np.int64(0)
                    valid = True
                    for a in range(d):
                        step = rem % 3 - 1
                        rem //= 3
                        c = ic[a] + step
                        if c < 0 or c >= span[a]:
                            valid = False
                            break
                        target = target * span[a] + c
                    if not valid:
                        continue
                    for t in range(bucket_start[target], bucket_start[target + 1]):
                        jb = bucket_items[t]
                        if not keep[jb] or times[jb] >= tp:
                            continue
                        acc = status_val[jb] if status_stamp[jb] == k else base_acc[jb]
                        if not acc:
                            continue
                        dist2 = 0.0
                        for a in range(d):
                            delta = p[a] - pos[jb, a]
                            dist2 += delta * delta
                        if dist2 <= r2:
                            blocked = True
                            break
                    if blocked:
                        break
                if not blocked:
                    for t in range(n_new_acc):
                        if new_acc_t[t] >= tp:
                            continue
                        dist2 = 0.0
                        for a in range(d):
                            delta = p[a] - new_acc_pos[t, a]
                            dist2 += delta * delta
                        if dist2 <= r2:
                            blocked = True
                            break
                if not blocked:
                    new_acc_pos[n_new_acc] = p
                    new_acc_t[n_new_acc] = tp
                    n_new_acc += 1
                    _mark_later_dirty(p, tp, -1, pos, times, rank, keep,
                                      _cell_index(p, lo, span, cell), bucket_start,
                                      bucket_items, span, lo, r2, dirty_stamp, k)
                    _update_cover(counts, sites, p, ball_r, 1)
                    changed_any[k] = True
            else:
                i = order[bi]
                bi += 1
                if not keep[i] or dirty_stamp[i] != k:
                    continue
                p = pos[i]
                blocked = False
                for o in range(3 ** d):
                    rem = o
                    target = np.int64(0)
                    valid = True
                    for a in range(d):
                        step = rem % 3 - 1
                        rem //= 3
                        c = (icell[i, a] - lo[a]) + step
                        if c < 0 or c >= span[a]:
                            valid = False
                            break
                        target = target * span[a] + c
                    if not valid:
                        continue
                    for t in range(bucket_start[target], bucket_start[target + 1]):
                        jb = bucket_items[t]
                        if jb == i or not keep[jb] or rank[jb] > rank[i]:
                            continue
                        acc = status_val[jb] if status_stamp[jb] == k else base_acc[jb]
                        if not acc:
                            continue
                        dist2 = 0.0
                        for a in range(d):
                            delta = p[a] - pos[jb, a]
                            dist2 += delta * delta
                        if dist2 <= r2:
                            blocked = True
                            break
                    if blocked:
                        break
                if not blocked:
                    for t in range(n_new_acc):
                        if new_acc_t[t] >= times[i]:
                            continue
                        dist2 = 0.0
                        for a in range(d):
                            delta = p[a] - new_acc_pos[t, a]
                            dist2 += delta * delta
                        if dist2 <= r2:
                            blocked = True
                            break
                new_status = not blocked
                if new_status != base_acc[i]:
                    status_stamp[i] = k
                    status_val[i] = new_status
                    _mark_later_dirty(p, times[i], rank[i], pos, times, rank, keep,
                                      icell[i] - lo, bucket_start, bucket_items, span,
                                      lo, r2, dirty_stamp, k)
                    _update_cover(counts, sites, p, ball_r, 1 if new_status else -1)
                    changed_any[k] = True
        for j in range(n_sites):
            covered[k, j] = counts[j] > 0
    return covered, changed_any


def replay_cover_batch(grid: GridCSR, base_acc: np.ndarray, keep: np.ndarray,
                       new_pos: np.ndarray, new_times: np.ndarray,
                       offsets: np.ndarray, sites: np.ndarray, ball_r: float,
                       base_counts: np.ndarray):
    """Site cover flags for K block resamples of a hardcore construction.

    ``keep`` marks base points outside the resampled block; new points come
    concatenated with offsets.  Returns (covered (K, n_sites), changed (K,)).
    """
    d = grid.pos.shape[1]
    return _replay_cover_batch(
        grid.pos, grid.times, grid.order, grid.rank,
        np.ascontiguousarray(base_acc, dtype=np.bool_), grid.icell,
        grid.bucket_start, grid.bucket_items, grid.span, grid.lo, grid.R,
        np.ascontiguousarray(keep, dtype=np.bool_),
        np.ascontiguousarray(new_pos, dtype=np.float64).reshape(-1, d),
        np.ascontiguousarray(new_times, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(sites, dtype=np.float64), float(ball_r),
        np.ascontiguousarray(base_counts, dtype=np.int64))
