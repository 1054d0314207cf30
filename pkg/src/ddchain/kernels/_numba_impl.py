"""Numba-compiled kernels.  Contracts identical to the numpy fallback."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _two_cycles_pass(adj, out, fill):
    n = adj.shape[0]
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j] and adj[j, i]:
                if fill:
                    out[m, 0] = i
                    out[m, 1] = j
                m += 1
    return m


def two_cycles(adj: np.ndarray) -> np.ndarray:
    dummy = np.empty((0, 2), dtype=np.int32)
    m = _two_cycles_pass(adj, dummy, False)
    out = np.empty((m, 2), dtype=np.int32)
    _two_cycles_pass(adj, out, True)
    return out


@njit(cache=True)
def _three_cycles_pass(adj, out, fill):
    n = adj.shape[0]
    m = 0
    for u in range(n):
        for v in range(u + 1, n):
            if not adj[u, v]:
                continue
            for w in range(u + 1, n):
                if w == v:
                    continue
                if adj[v, w] and adj[w, u]:
                    if fill:
                        out[m, 0] = u
                        out[m, 1] = v
                        out[m, 2] = w
                    m += 1
    return m


def three_cycles(adj: np.ndarray) -> np.ndarray:
    dummy = np.empty((0, 3), dtype=np.int32)
    m = _three_cycles_pass(adj, dummy, False)
    out = np.empty((m, 3), dtype=np.int32)
    _three_cycles_pass(adj, out, True)
    return out


@njit(cache=True)
def _chains_pass(indptr, indices, roots, mid_ok, term_ok, k, out, fill):
    n = roots.shape[0]
    m = 0
    path = np.empty(k + 1, dtype=np.int32)
    on_path = np.zeros(n, dtype=np.bool_)
    nodes = np.empty(k + 1, dtype=np.int64)
    ptrs = np.empty(k + 1, dtype=np.int64)
    for r in range(n):
        if not roots[r]:
            continue
        path[0] = r
        on_path[r] = True
        sp = 0
        nodes[0] = r
        ptrs[0] = indptr[r]
        while sp >= 0:
            node = nodes[sp]
            p = ptrs[sp]
            if p >= indptr[node + 1]:
                on_path[node] = False
                sp -= 1
                continue
            ptrs[sp] = p + 1
            nxt = indices[p]
            if on_path[nxt]:
                continue
            depth = sp + 1
            path[depth] = nxt
            if term_ok[nxt]:
                if fill:
                    for j in range(k + 1):
                        out[m, j] = path[j] if j <= depth else -1
                m += 1
            if depth < k and mid_ok[nxt]:
                sp += 1
                nodes[sp] = nxt
                ptrs[sp] = indptr[nxt]
                on_path[nxt] = True
    return m


def chains_upto(
    indptr: np.ndarray,
    indices: np.ndarray,
    roots: np.ndarray,
    mid_ok: np.ndarray,
    term_ok: np.ndarray,
    k: int,
) -> np.ndarray:
    dummy = np.empty((0, k + 1), dtype=np.int32)
    m = _chains_pass(indptr, indices, roots, mid_ok, term_ok, k, dummy, False)
    out = np.empty((m, k + 1), dtype=np.int32)
    _chains_pass(indptr, indices, roots, mid_ok, term_ok, k, out, True)
    return out


@njit(cache=True)
def _greedy_pack(rows, weights, caps):
    m, width = rows.shape
    avail = caps.astype(np.int64)
    chosen = np.zeros(m, dtype=np.uint8)
    value = 0.0
    for i in range(m):
        ok = True
        for j in range(width):
            v = rows[i, j]
            if v < 0:
                break
            if avail[v] <= 0:
                ok = False
                break
        if not ok:
            continue
        for j in range(width):
            v = rows[i, j]
            if v < 0:
                break
            avail[v] -= 1
        chosen[i] = 1
        value += weights[i]
    return chosen, value


def greedy_pack(
    rows: np.ndarray, weights: np.ndarray, caps: np.ndarray
) -> tuple[np.ndarray, float]:
    chosen, value = _greedy_pack(rows, weights, caps)
    return chosen, float(value)


@njit(cache=True)
def _share_bound(rows, weights, active, avail):
    m, width = rows.shape
    n = avail.shape[0]
    best = np.zeros(n, dtype=np.float64)
    for i in range(m):
        if not active[i]:
            continue
        size = 0
        ok = True
        for j in range(width):
            v = rows[i, j]
            if v < 0:
                break
            if avail[v] <= 0:
                ok = False
                break
            size += 1
        if not ok or size == 0:
            continue
        share = weights[i] / size
        for j in range(size):
            v = rows[i, j]
            if share > best[v]:
                best[v] = share
    total = 0.0
    for v in range(n):
        if avail[v] > 0:
            total += best[v] * avail[v]
    return total


def share_bound(
    rows: np.ndarray, weights: np.ndarray, active: np.ndarray, avail: np.ndarray
) -> float:
    return float(_share_bound(rows, weights, active, avail))
