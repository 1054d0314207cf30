"""Enumeration of feasible exchange structures: bounded cycles and DD-rooted chains.

Cycles live on pair-kind nodes only; chains start at a deceased donor, pass
through pairs, and end at a wait-list patient or at a dual-registered pair
(which then receives without donating).  Each structure is one candidate for
one copy of the replicated formulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .model import (
    Edge,
    ExchangeGraph,
    InputError,
    Node,
    NodeKind,
)

__all__ = [
    "Exchange",
    "enumerate_cycles",
    "enumerate_chains",
    "filter_compatible_pair_exchanges",
    "exchange_to_dict",
]

CYCLE = "cycle"
CHAIN = "chain"


@dataclass(frozen=True)
class Exchange:
    """One feasible cycle or DD-initiated chain.

    `node_ids` is the canonical node order: cycles start at their minimum
    node id; chains start at the deceased donor.  `edges` follow that order
    (for a cycle the closing edge comes last).  For pairs with several
    donors the heaviest outgoing parallel edge is kept (lowest donor id on
    ties): within a single structure a pair donates at most once, so the
    lighter alternatives are dominated.
    """

    kind: str
    edges: Tuple[Edge, ...]
    node_ids: Tuple[int, ...]
    total_weight: float
    copy_index: Optional[int] = None

    @property
    def nodes_used(self) -> frozenset[int]:
        return frozenset(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def with_copy(self, copy_index: int) -> "Exchange":
        return replace(self, copy_index=copy_index)


class GraphArrays:
    """Dense array view of an ExchangeGraph shared by enumeration and solvers.

    Self-edges (compatible-pair thresholds) are excluded from the adjacency;
    parallel multi-donor edges are collapsed to the heaviest one.
    """

    def __init__(self, g: ExchangeGraph):
        n = g.num_nodes
        self.g = g
        self.n = n
        self.ids = np.array([nd.id for nd in g.nodes], dtype=np.int64)
        self.kind = np.array([int(nd.kind) for nd in g.nodes], dtype=np.int8)
        self.is_dd = self.kind == int(NodeKind.DD)
        self.is_wl = self.kind == int(NodeKind.WL)
        self.is_pair = (self.kind == int(NodeKind.PAIR)) | (
            self.kind == int(NodeKind.CN)
        )
        self.is_cn = self.kind == int(NodeKind.CN)
        self.is_pwl = np.array([nd.is_pwl for nd in g.nodes], dtype=bool)
        self.caps = np.array([g.capacity[nd.id] for nd in g.nodes], dtype=np.int32)
        self.self_w = np.zeros(n, dtype=np.float64)
        for i, nd in enumerate(g.nodes):
            if nd.kind == NodeKind.CN:
                self.self_w[i] = nd.self_weight

        self.adj = np.zeros((n, n), dtype=bool)
        self.W = np.zeros((n, n), dtype=np.float64)
        self.eidx = np.full((n, n), -1, dtype=np.int32)
        for ei, e in enumerate(g.edges):
            if e.src == e.dst:
                continue
            i = g.index_of[e.src]
            j = g.index_of[e.dst]
            # edges are sorted by donor_id: keep strictly heavier ones only
            if not self.adj[i, j] or e.weight > self.W[i, j]:
                self.adj[i, j] = True
                self.W[i, j] = e.weight
                self.eidx[i, j] = ei

    def csr(self, adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        counts = adj.sum(axis=1)
        np.cumsum(counts, out=indptr[1:])
        indices = np.nonzero(adj)[1].astype(np.int32)
        return indptr, indices

    def filtered_adj(self, include_cn_constraint: bool) -> np.ndarray:
        """Adjacency after dropping edges a compatible pair must refuse."""
        if not include_cn_constraint or not self.is_cn.any():
            return self.adj
        banned = self.is_cn[None, :] & (self.W < self.self_w[None, :])
        return self.adj & ~banned


def _arrays(g: ExchangeGraph) -> GraphArrays:
    cached = getattr(g, "_ddchain_arrays", None)
    if cached is None:
        cached = GraphArrays(g)
        g._ddchain_arrays = cached
    return cached


@dataclass
class StructSet:
    """Structure candidates as padded node-index rows plus weights."""

    rows: np.ndarray  # int32[m, width], -1 padded
    weights: np.ndarray  # float64[m]
    kinds: np.ndarray  # int8[m]: 0 cycle, 1 chain
    width: int


def _cycle_rows(arr: GraphArrays, adj: np.ndarray, k: int) -> list[np.ndarray]:
    """Cycle node rows of length 2..k, canonical (min index first)."""
    sub = adj & arr.is_pair[None, :] & arr.is_pair[:, None]
    blocks: list[np.ndarray] = [kernels.two_cycles(sub)]
    if k >= 3:
        blocks.append(kernels.three_cycles(sub))
    if k >= 4:
        blocks.extend(_long_cycles(sub, k))
    return blocks


def _long_cycles(sub: np.ndarray, k: int) -> list[np.ndarray]:
    """Simple directed cycles of length 4..k via DFS from each minimum node."""
    n = sub.shape[0]
    found: dict[int, list[tuple[int, ...]]] = {m: [] for m in range(4, k + 1)}
    succ = [np.nonzero(sub[v])[0] for v in range(n)]

    def extend(start: int, path: list[int], on: set[int]) -> None:
        v = path[-1]
        for w in succ[v]:
            if w == start and 4 <= len(path) <= k:
                found[len(path)].append(tuple(path))
            if w <= start or w in on or len(path) >= k:
                continue
            on.add(w)
            path.append(int(w))
            extend(start, path, on)
            path.pop()
            on.remove(int(w))

    for s in range(n):
        extend(s, [s], {s})
    blocks = []
    for m in range(4, k + 1):
        rows = sorted(found[m])
        blocks.append(np.array(rows, dtype=np.int32).reshape(len(rows), m))
    return blocks


def _chain_rows(
    arr: GraphArrays, adj: np.ndarray, k: int, require_wl_terminus: bool
) -> np.ndarray:
    indptr, indices = arr.csr(adj)
    term = arr.is_wl.copy()
    if not require_wl_terminus:
        term |= arr.is_pwl
    return kernels.chains_upto(indptr, indices, arr.is_dd, arr.is_pair, term, k)


def _pad(rows: np.ndarray, width: int) -> np.ndarray:
    m, w = rows.shape
    if w == width:
        return rows
    out = np.full((m, width), -1, dtype=np.int32)
    out[:, :w] = rows
    return out


def _row_weights(arr: GraphArrays, rows: np.ndarray, closed: bool) -> np.ndarray:
    m, w = rows.shape
    total = np.zeros(m, dtype=np.float64)
    for j in range(w - 1):
        a = rows[:, j]
        b = rows[:, j + 1]
        ok = (a >= 0) & (b >= 0)
        total[ok] += arr.W[a[ok], b[ok]]
    if closed:
        last = np.where(rows < 0, 0, 1).sum(axis=1) - 1
        a = rows[np.arange(m), last]
        total += arr.W[a, rows[:, 0]]
    return total


def build_structures(
    arr: GraphArrays,
    k: int,
    require_wl_terminus: bool = False,
    include_cn_constraint: bool = False,
    cycles: bool = True,
    chains: bool = True,
) -> StructSet:
    adj = arr.filtered_adj(include_cn_constraint)
    width = max(3, k + 1)
    blocks: list[np.ndarray] = []
    kinds: list[np.ndarray] = []
    if cycles and k >= 2:
        for b in _cycle_rows(arr, adj, k):
            blocks.append(_pad(b, width))
            kinds.append(np.zeros(b.shape[0], dtype=np.int8))
    chain_rows = None
    if chains and arr.is_dd.any():
        chain_rows = _chain_rows(arr, adj, k, require_wl_terminus)
        blocks.append(_pad(chain_rows, width))
        kinds.append(np.ones(chain_rows.shape[0], dtype=np.int8))
    if not blocks:
        return StructSet(
            rows=np.empty((0, width), dtype=np.int32),
            weights=np.empty(0, dtype=np.float64),
            kinds=np.empty(0, dtype=np.int8),
            width=width,
        )
    rows = np.concatenate(blocks, axis=0)
    kind_arr = np.concatenate(kinds)
    weights = np.zeros(rows.shape[0], dtype=np.float64)
    cyc = kind_arr == 0
    if cyc.any():
        weights[cyc] = _row_weights(arr, rows[cyc], closed=True)
    if (~cyc).any():
        weights[~cyc] = _row_weights(arr, rows[~cyc], closed=False)
    return StructSet(rows=rows, weights=weights, kinds=kind_arr, width=width)


def row_to_exchange(arr: GraphArrays, row: np.ndarray, kind_code: int) -> Exchange:
    """Materialize one padded node-index row into an Exchange with real edges."""
    nodes = [int(v) for v in row if v >= 0]
    g = arr.g
    seq = nodes + [nodes[0]] if kind_code == 0 else nodes
    edges = []
    for a, b in zip(seq, seq[1:]):
        ei = int(arr.eidx[a, b])
        if ei < 0:
            raise InputError(f"missing edge {arr.ids[a]}->{arr.ids[b]} during decode")
        edges.append(g.edges[ei])
    return Exchange(
        kind=CYCLE if kind_code == 0 else CHAIN,
        edges=tuple(edges),
        node_ids=tuple(int(arr.ids[v]) for v in nodes),
        total_weight=float(sum(e.weight for e in edges)),
    )


def enumerate_cycles(g: ExchangeGraph, k: int) -> List[Exchange]:
    """All simple directed cycles of 2..k edges among pair-kind nodes.

    Each cycle is reported once, rotated to start at its minimum node id.
    Self-edges never participate.
    """
    if k < 2:
        raise InputError("cycle enumeration needs k >= 2")
    arr = _arrays(g)
    struct = build_structures(arr, k, chains=False)
    return [
        row_to_exchange(arr, struct.rows[i], 0) for i in range(struct.rows.shape[0])
    ]


def enumerate_chains(
    g: ExchangeGraph, k: int, require_wl_terminus: bool = False
) -> List[Exchange]:
    """All simple DD-rooted paths of 1..k edges ending at WL (or PWL).

    The bare DD->WL arc counts as the degenerate one-edge chain.  Exchange-only
    pairs cannot terminate a chain (they must pass the kidney on); nodes
    registered in both pools may, unless `require_wl_terminus` is set.
    """
    if k < 1:
        raise InputError("chain enumeration needs k >= 1")
    arr = _arrays(g)
    struct = build_structures(arr, k, require_wl_terminus, cycles=False)
    return [
        row_to_exchange(arr, struct.rows[i], 1) for i in range(struct.rows.shape[0])
    ]


def filter_compatible_pair_exchanges(
    exchanges: Iterable[Exchange], g: ExchangeGraph
) -> List[Exchange]:
    """Drop exchanges in which a compatible pair receives less than its own match.

    An exchange survives iff every edge (j, i) into a compatible-pair node i
    has weight >= that node's self-match weight (ties kept).
    """
    thresholds = {
        n.id: n.self_weight for n in g.nodes if n.kind == NodeKind.CN
    }
    if not thresholds:
        return list(exchanges)
    kept = []
    for ex in exchanges:
        ok = all(
            e.dst not in thresholds or e.weight >= thresholds[e.dst]
            for e in ex.edges
        )
        if ok:
            kept.append(ex)
    return kept


def exchange_to_dict(ex: Exchange) -> dict:
    d = {
        "kind": ex.kind,
        "node_ids": list(ex.node_ids),
        "edge_list": [[e.src, e.dst, e.donor_id] for e in ex.edges],
        "weight": ex.total_weight,
    }
    if ex.copy_index is not None:
        d["copy_index"] = ex.copy_index
    return d
