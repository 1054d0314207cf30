"""Pure-numpy fallback for the hot kernels.

Output contracts (row ordering, padding, dtypes) match the numba backend
exactly; see kernels/__init__.py.
"""
from __future__ import annotations

import numpy as np


def two_cycles(adj: np.ndarray) -> np.ndarray:
    """All unordered {i, j}, i < j, with edges both ways.  Rows sorted (i, j)."""
    mutual = adj & adj.T
    out = np.argwhere(np.triu(mutual, 1))
    return np.ascontiguousarray(out.astype(np.int32))


def three_cycles(adj: np.ndarray) -> np.ndarray:
    """All directed triangles u->v->w->u with u = min(u,v,w).

    Rows sorted by (u, v, w); each directed 3-cycle appears exactly once
    because the orientation fixes the (v, w) order.
    """
    n = adj.shape[0]
    rows = []
    for u in range(n):
        succ = np.nonzero(adj[u, u + 1 :])[0] + u + 1
        if succ.size == 0:
            continue
        pred = np.nonzero(adj[u + 1 :, u])[0] + u + 1
        if pred.size == 0:
            continue
        sub = adj[np.ix_(succ, pred)]
        np.logical_and(sub, succ[:, None] != pred[None, :], out=sub)
        vw = np.argwhere(sub)
        if vw.size:
            block = np.empty((vw.shape[0], 3), dtype=np.int32)
            block[:, 0] = u
            block[:, 1] = succ[vw[:, 0]]
            block[:, 2] = pred[vw[:, 1]]
            rows.append(block)
    if not rows:
        return np.empty((0, 3), dtype=np.int32)
    return np.concatenate(rows, axis=0)


def chains_upto(
    indptr: np.ndarray,
    indices: np.ndarray,
    roots: np.ndarray,
    mid_ok: np.ndarray,
    term_ok: np.ndarray,
    k: int,
) -> np.ndarray:
    """Simple paths of 1..k edges from each root, ending at a terminal node.

    `indptr`/`indices` is CSR adjacency with neighbor lists ascending.
    Interior nodes must satisfy `mid_ok`; the last node must satisfy
    `term_ok`.  Rows are node indexes padded with -1, emitted in DFS order
    (roots ascending, neighbors ascending, a path before its extensions).
    """
    out: list[list[int]] = []
    path = np.empty(k + 1, dtype=np.int32)
    on_path = np.zeros(roots.shape[0], dtype=bool)

    def walk(node: int, depth: int) -> None:
        for nxt in indices[indptr[node] : indptr[node + 1]]:
            if on_path[nxt]:
                continue
            path[depth] = nxt
            if term_ok[nxt]:
                row = [-1] * (k + 1)
                row[: depth + 1] = [int(x) for x in path[: depth + 1]]
                out.append(row)
            if depth < k and mid_ok[nxt]:
                on_path[nxt] = True
                walk(int(nxt), depth + 1)
                on_path[nxt] = False

    for r in np.nonzero(roots)[0]:
        path[0] = r
        on_path[r] = True
        walk(int(r), 1)
        on_path[r] = False
    if not out:
        return np.empty((0, k + 1), dtype=np.int32)
    return np.asarray(out, dtype=np.int32)


def greedy_pack(
    rows: np.ndarray, weights: np.ndarray, caps: np.ndarray
) -> tuple[np.ndarray, float]:
    """Select rows front-to-back whenever every member node has spare capacity.

    Rows are left-packed node indexes padded with -1 on the right; every real
    structure carries at least one node.
    """
    m, width = rows.shape
    avail = caps.astype(np.int64).copy()
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
    return chosen, float(value)


def share_bound(
    rows: np.ndarray, weights: np.ndarray, active: np.ndarray, avail: np.ndarray
) -> float:
    """Fractional per-node upper bound on the best remaining packing value.

    Every selected row e contributes w_e = sum over its nodes of w_e/|e|,
    and node v absorbs at most avail[v] rows, so
    sum_v avail[v] * max_{e active, selectable, v in e} w_e/|e| is a valid
    upper bound.
    """
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
    return float(np.dot(best, np.maximum(avail, 0)))
