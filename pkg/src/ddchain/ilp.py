"""Exact optimization: the replicated-copy 0-1 program and a packing backend.

Two independent routes compute the same optimum:

* :func:`solve_bb` works on the compact formulation (one binary per edge per
  graph copy).  Copies only interact through the once-per-node donation and
  reception caps, so the solver searches the aggregated edge space with an
  LP relaxation bound, adds a length cut whenever an integral aggregate
  contains a structure longer than ``k``, and branches on the fractional
  edge with the lowest index.
* :func:`solve_packing` enumerates every bounded cycle and chain and selects
  a maximum-weight node-disjoint subset by branch and bound (with a
  symmetric fast route for unit-weight ABO-only pools, where pairs of equal
  blood-group signature are interchangeable).

:func:`oracle_bruteforce` is a third, deliberately naive implementation used
to cross-check both solvers on small instances.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from . import kernels
from .enumeration import (
    CHAIN,
    CYCLE,
    Exchange,
    GraphArrays,
    StructSet,
    _arrays,
    build_structures,
    exchange_to_dict,
    row_to_exchange,
)
from .model import (
    BloodGroup,
    Edge,
    ExchangeGraph,
    InputError,
    Node,
    NodeKind,
    abo_compatible,
)

__all__ = [
    "CompactFormulation",
    "MatchPlan",
    "InvariantViolation",
    "build_compact",
    "solve_bb",
    "solve_packing",
    "oracle_bruteforce",
    "validate_plan",
    "plan_to_dict",
    "dump_lp",
]

_INT_TOL = 1e-7


class InvariantViolation(RuntimeError):
    """A structural guarantee failed (e.g. backends disagree)."""


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchPlan:
    """A node-disjoint set of exchanges, one per active copy."""

    exchanges: Tuple[Exchange, ...]
    objective: float
    assignment: Mapping[int, Optional[int]]


def _edge_index_map(g: ExchangeGraph) -> Dict[Tuple[int, int, int], int]:
    return {(e.src, e.dst, e.donor_id): i for i, e in enumerate(g.edges)}


def _make_plan(g: ExchangeGraph, exchanges: Sequence[Exchange]) -> MatchPlan:
    """Assemble a plan: copies ordered by minimum member edge index."""
    emap = _edge_index_map(g)
    keyed = sorted(
        exchanges, key=lambda ex: min(emap[(e.src, e.dst, e.donor_id)] for e in ex.edges)
    )
    final = tuple(ex.with_copy(i) for i, ex in enumerate(keyed))
    assignment: Dict[int, Optional[int]] = {n.id: None for n in g.nodes}
    for i, ex in enumerate(final):
        for nid in ex.node_ids:
            if assignment[nid] is None:
                assignment[nid] = i
    objective = float(sum(ex.total_weight for ex in final))
    return MatchPlan(exchanges=final, objective=objective, assignment=assignment)


def plan_to_dict(plan: MatchPlan) -> dict:
    return {
        "objective": plan.objective,
        "exchanges": [exchange_to_dict(ex) for ex in plan.exchanges],
    }


# ---------------------------------------------------------------------------
# compact formulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompactFormulation:
    """The replicated-copy integer program for one graph.

    One binary variable per (eligible edge, copy); copy count follows the
    replication rule: number of deceased donors plus half the pair nodes.
    Threshold self-edges are data, not variables.  Constraint rows are
    generated on demand (see :meth:`iter_lp_lines`) so large instances never
    materialize the full row set.
    """

    graph: ExchangeGraph
    k: int
    num_copies: int
    include_cn_constraint: bool
    require_wl_terminus: bool
    var_edges: Tuple[int, ...]

    @property
    def num_variables(self) -> int:
        return len(self.var_edges) * self.num_copies

    def banned_edges(self) -> frozenset[int]:
        """Edges a compatible pair must refuse under the threshold constraint."""
        if not self.include_cn_constraint:
            return frozenset()
        g = self.graph
        thr = {n.id: n.self_weight for n in g.nodes if n.kind == NodeKind.CN}
        return frozenset(
            ei
            for ei in self.var_edges
            if g.edges[ei].dst in thr and g.edges[ei].weight < thr[g.edges[ei].dst]
        )

    def iter_lp_lines(self) -> Iterator[str]:
        """Plain-text rendering, variables ``x_<edge>_<copy>``, one row per line."""
        g = self.graph
        terms = [
            f"+{g.edges[ei].weight:g} x_{ei}_{l}"
            for l in range(self.num_copies)
            for ei in self.var_edges
        ]
        yield "max: " + " ".join(terms) if terms else "max: 0"
        out_of = {n.id: [] for n in g.nodes}
        into = {n.id: [] for n in g.nodes}
        for ei in self.var_edges:
            e = g.edges[ei]
            out_of[e.src].append(ei)
            into[e.dst].append(ei)
        thr = {n.id: n.self_weight for n in g.nodes if n.kind == NodeKind.CN}
        for l in range(self.num_copies):
            for n in g.nodes:
                outs, ins = out_of[n.id], into[n.id]
                conserve = n.kind in (NodeKind.PAIR, NodeKind.CN) and (
                    not n.is_pwl or self.require_wl_terminus
                )
                if conserve and (outs or ins):
                    lhs = " ".join(
                        [f"+1 x_{e}_{l}" for e in outs] + [f"-1 x_{e}_{l}" for e in ins]
                    )
                    yield f"conserve_n{n.id}_c{l}: {lhs} = 0"
                if n.is_pwl and not self.require_wl_terminus and (outs or ins):
                    lhs = " ".join(
                        [f"+1 x_{e}_{l}" for e in outs] + [f"-1 x_{e}_{l}" for e in ins]
                    )
                    yield f"pwl_give_le_recv_n{n.id}_c{l}: {lhs} <= 0"
                if ins and n.kind != NodeKind.DD:
                    yield (
                        f"recv_cap_n{n.id}_c{l}: "
                        + " ".join(f"+1 x_{e}_{l}" for e in ins)
                        + " <= 1"
                    )
                if outs and n.kind in (NodeKind.DD, NodeKind.PAIR, NodeKind.CN):
                    yield (
                        f"give_cap_n{n.id}_c{l}: "
                        + " ".join(f"+1 x_{e}_{l}" for e in outs)
                        + " <= 1"
                    )
            if self.var_edges:
                yield (
                    f"copy_size_c{l}: "
                    + " ".join(f"+1 x_{e}_{l}" for e in self.var_edges)
                    + f" <= {self.k}"
                )
            if self.include_cn_constraint:
                for ei in self.var_edges:
                    e = g.edges[ei]
                    if e.dst in thr:
                        coef = e.weight - thr[e.dst]
                        yield f"cn_threshold_e{ei}_c{l}: {coef:+g} x_{ei}_{l} >= 0"
        for n in g.nodes:
            if out_of[n.id]:
                yield (
                    f"give_once_n{n.id}: "
                    + " ".join(
                        f"+1 x_{e}_{l}"
                        for l in range(self.num_copies)
                        for e in out_of[n.id]
                    )
                    + " <= 1"
                )
            if into[n.id]:
                yield (
                    f"recv_once_n{n.id}: "
                    + " ".join(
                        f"+1 x_{e}_{l}"
                        for l in range(self.num_copies)
                        for e in into[n.id]
                    )
                    + " <= 1"
                )
        for l in range(self.num_copies):
            for ei in self.var_edges:
                yield f"bin x_{ei}_{l}"


def build_compact(
    g: ExchangeGraph,
    k: int,
    include_cn_constraint: bool = False,
    require_wl_terminus: bool = False,
) -> CompactFormulation:
    if k < 1:
        raise InputError("chain/cycle bound k must be >= 1")
    if any(c != 1 for c in g.capacity.values()):
        raise InputError("the compact formulation requires unit node capacities")
    counts = g.kind_counts()
    num_copies = counts[NodeKind.DD] + g.pair_count() // 2
    var_edges = tuple(i for i, e in enumerate(g.edges) if e.src != e.dst)
    return CompactFormulation(
        graph=g,
        k=k,
        num_copies=num_copies,
        include_cn_constraint=include_cn_constraint,
        require_wl_terminus=require_wl_terminus,
        var_edges=var_edges,
    )


def dump_lp(f: CompactFormulation, path: str) -> None:
    with open(path, "w") as fh:
        for line in f.iter_lp_lines():
            fh.write(line)
            fh.write("\n")


# ---------------------------------------------------------------------------
# compact solver: branch, cut and bound over the aggregated edge space
# ---------------------------------------------------------------------------


def _weights_integral(w: np.ndarray) -> bool:
    return bool(np.all(np.abs(w - np.round(w)) < 1e-9))


def _improves(bound: float, best: float, integral: bool) -> bool:
    if integral:
        return bound >= best + 1.0 - 1e-6
    return bound > best + 1e-9


def solve_bb(f: CompactFormulation) -> MatchPlan:
    """Optimal plan for the compact program, by branch-cut-and-bound.

    Within one copy the selected edges form a single cycle or DD-rooted path,
    and every node acts in at most one copy, so feasible solutions correspond
    1-1 to aggregated edge sets whose connected components are valid short
    structures.  The relaxation splits each edge into chain-slot variables
    (an edge in slot p needs a predecessor in slot p-1, and exchange-only
    pairs cannot receive in the last slot, so chains longer than ``k`` are
    unrepresentable) plus a cycle variable.  The search branches on the
    lowest-index edge with fractional total; integral solutions containing an
    over-long cycle are either rewritten into an equal-cover of short cycles
    or cut off via consecutive-edge inequalities.
    """
    g = f.graph
    k = f.k
    edge_ids = [ei for ei in f.var_edges if ei not in f.banned_edges()]
    E = len(edge_ids)
    if E == 0:
        return _make_plan(g, [])
    idx_of = g.index_of
    src = np.array([idx_of[g.edges[ei].src] for ei in edge_ids], dtype=np.int64)
    dst = np.array([idx_of[g.edges[ei].dst] for ei in edge_ids], dtype=np.int64)
    ew = np.array([g.edges[ei].weight for ei in edge_ids], dtype=np.float64)
    integral = _weights_integral(ew)

    n = g.num_nodes
    kind = np.array([int(nd.kind) for nd in g.nodes], dtype=np.int8)
    is_pwl = np.array([nd.is_pwl for nd in g.nodes], dtype=bool)
    is_dd = kind == int(NodeKind.DD)
    is_pair = (kind == int(NodeKind.PAIR)) | (kind == int(NodeKind.CN))
    forwarding = is_pair & (~is_pwl if not f.require_wl_terminus else np.ones(n, bool))

    # columns: ("z", edge, slot) chain variables and ("c", edge) cycle variables
    col_edge: List[int] = []
    col_kind: List[Tuple[str, int]] = []  # ("z", slot) or ("c", 0)
    edge_cols: Dict[int, List[int]] = {}
    for j in range(E):
        cols_j = []
        if is_dd[src[j]]:
            cols_j.append(("z", 1))
        if is_pair[src[j]]:
            cols_j.extend(("z", p) for p in range(2, k + 1))
            if is_pair[dst[j]]:
                cols_j.append(("c", 0))
        edge_cols[j] = []
        for tag in cols_j:
            edge_cols[j].append(len(col_edge))
            col_edge.append(j)
            col_kind.append(tag)
    C = len(col_edge)
    if C == 0:
        return _make_plan(g, [])
    w = np.array([ew[col_edge[c]] for c in range(C)], dtype=np.float64)

    z_in: Dict[Tuple[int, int], List[int]] = {}  # (node, slot) -> cols into node
    z_out: Dict[Tuple[int, int], List[int]] = {}
    c_in: Dict[int, List[int]] = {}
    c_out: Dict[int, List[int]] = {}
    any_in: Dict[int, List[int]] = {v: [] for v in range(n)}
    any_out: Dict[int, List[int]] = {v: [] for v in range(n)}
    for c in range(C):
        j = col_edge[c]
        tag, slot = col_kind[c]
        any_out[int(src[j])].append(c)
        any_in[int(dst[j])].append(c)
        if tag == "z":
            z_out.setdefault((int(src[j]), slot), []).append(c)
            z_in.setdefault((int(dst[j]), slot), []).append(c)
        else:
            c_out.setdefault(int(src[j]), []).append(c)
            c_in.setdefault(int(dst[j]), []).append(c)

    rows_ub: list[tuple[list[int], list[float], float]] = []
    rows_eq: list[tuple[list[int], list[float], float]] = []
    for v in range(n):
        outs, ins = any_out[v], any_in[v]
        if outs:
            rows_ub.append((outs, [1.0] * len(outs), 1.0))
        if ins:
            rows_ub.append((ins, [1.0] * len(ins), float(g.capacity[g.nodes[v].id])))
        if not is_pair[v] or not (outs or ins):
            continue
        coefs = ([1.0] * len(outs)) + ([-1.0] * len(ins))
        if forwarding[v]:
            rows_eq.append((outs + ins, coefs, 0.0))
        else:
            rows_ub.append((outs + ins, coefs, 0.0))
            # one structure per node: a dual-registered pair cannot take a
            # chain kidney and hand a cycle kidney on
            zi = [c for p in range(1, k + 1) for c in z_in.get((v, p), [])]
            co = [c for c in outs if col_kind[c][0] == "c"]
            if zi and co:
                rows_ub.append((zi + co, [1.0] * (len(zi) + len(co)), 1.0))
        # cycle edges always close up, so they balance at every pair node
        ci_v, co_v = c_in.get(v, []), c_out.get(v, [])
        if ci_v or co_v:
            rows_eq.append(
                (ci_v + co_v, [1.0] * len(ci_v) + [-1.0] * len(co_v), 0.0)
            )
        # chain continuity: donate in slot p only after receiving in slot p-1
        for p in range(2, k + 1):
            zo = z_out.get((v, p), [])
            zi = z_in.get((v, p - 1), [])
            if zo:
                rows_ub.append((zo + zi, [1.0] * len(zo) + [-1.0] * len(zi), 0.0))
        # forwarding pairs must donate one slot after receiving
        if forwarding[v]:
            for p in range(1, k + 1):
                zi = z_in.get((v, p), [])
                zo = z_out.get((v, p + 1), [])
                if zi:
                    rows_ub.append((zi + zo, [1.0] * len(zi) + [-1.0] * len(zo), 0.0))

    def _stack(rows, width):
        if not rows:
            return None, None
        data, ri, ci, rhs = [], [], [], []
        for r, (cc, vv, b) in enumerate(rows):
            ri.extend([r] * len(cc))
            ci.extend(cc)
            data.extend(vv)
            rhs.append(b)
        mat = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), width))
        return mat, np.array(rhs)

    A_ub_base, b_ub_base = _stack(rows_ub, C)
    A_eq, b_eq = _stack(rows_eq, C)

    extra_rows: list[tuple[list[int], list[float], float]] = []
    seen_cuts: set[Tuple[int, ...]] = set()
    cache: list = [None, None, 0]

    def _full_ub(branch_rows):
        mats = [A_ub_base] if A_ub_base is not None else []
        if cache[2] != len(extra_rows):
            cache[0], cache[1] = _stack(extra_rows, C)
            cache[2] = len(extra_rows)
        if cache[0] is not None:
            mats.append(cache[0])
        rhs = [b_ub_base] if A_ub_base is not None else []
        if cache[1] is not None:
            rhs.append(cache[1])
        if branch_rows:
            mb, rb = _stack(branch_rows, C)
            mats.append(mb)
            rhs.append(rb)
        return sparse.vstack(mats, format="csr"), np.concatenate(rhs)

    best_val = 0.0
    best_struct: List[Tuple[List[int], bool]] = []
    gv, gs = _greedy_aggregate(src, dst, ew, is_dd, is_pair, kind, is_pwl, k, f)
    if gv > 0.0:
        best_val, best_struct = gv, gs

    # branch state: edges fixed to 0 (ub mask) and edges fixed to 1 (>=1 rows)
    stack: list[tuple[frozenset, frozenset]] = [(frozenset(), frozenset())]
    while stack:
        zero_e, one_e = stack.pop()
        ub = np.ones(C)
        for j in zero_e:
            ub[edge_cols[j]] = 0.0
        branch_rows = [
            (edge_cols[j], [-1.0] * len(edge_cols[j]), -1.0) for j in sorted(one_e)
        ]
        while True:
            A_ub, b_ub = _full_ub(branch_rows)
            res = linprog(
                -w,
                A_ub=A_ub,
                b_ub=b_ub,
                A_eq=A_eq,
                b_eq=b_eq,
                bounds=np.column_stack([np.zeros(C), ub]),
                method="highs",
            )
            if res.status == 2:
                break  # branching fixed an inconsistent edge set
            if res.status != 0:
                raise InvariantViolation(f"relaxation solve failed: {res.message}")
            bound = -res.fun
            if not _improves(bound, best_val, integral):
                break
            x = res.x
            totals = np.zeros(E)
            for c in range(C):
                totals[col_edge[c]] += x[c]
            fracness = np.abs(totals - np.round(totals))
            frac = np.nonzero(fracness > 1e-6)[0]
            if frac.size:
                # most-fractional edge, ties to the lowest index
                j = int(frac[np.argmax(np.minimum(fracness[frac], 1 - fracness[frac]))])
                stack.append((zero_e | {j}, one_e))
                stack.append((zero_e, one_e | {j}))
                break
            sel = totals > 0.5
            structs, long_cycles = _split_components(sel, src, dst, k)
            val = sum(ew[list(s)].sum() for s, _ in structs)
            for comp in long_cycles:
                # incumbent repair: re-cover the nodes with short cycles
                cover = _short_cycle_cover(comp, src, dst, g, edge_ids, k)
                if cover is not None:
                    structs.extend(cover)
                    val += sum(ew[list(s)].sum() for s, _ in cover)
                # cuts keep the search exact whether or not the repair worked
                for cut in _window_cuts(comp, True, k):
                    if cut not in seen_cuts:
                        seen_cuts.add(cut)
                        extra_rows.append(
                            (
                                [c for j in cut for c in edge_cols[j]],
                                [1.0] * sum(len(edge_cols[j]) for j in cut),
                                float(k),
                            )
                        )
            if val > best_val + (1e-6 if integral else 1e-9):
                best_val = float(val)
                best_struct = [(list(s), c) for s, c in structs]
            if not _improves(bound, best_val, integral):
                break  # incumbent meets the bound: node solved
            if long_cycles:
                continue  # the new cuts exclude this solution; re-solve
            break

    exchanges = [
        _edge_cols_to_exchange(g, edge_ids, seq, CYCLE if cyc else CHAIN)
        for seq, cyc in best_struct
    ]
    plan = _make_plan(g, exchanges)
    if len(plan.exchanges) > f.num_copies:
        raise InvariantViolation("decoded more structures than available copies")
    return plan


def _greedy_aggregate(
    src: np.ndarray,
    dst: np.ndarray,
    ew: np.ndarray,
    is_dd: np.ndarray,
    is_pair: np.ndarray,
    kind: np.ndarray,
    is_pwl: np.ndarray,
    k: int,
    f: CompactFormulation,
) -> Tuple[float, List[Tuple[List[int], bool]]]:
    """Cheap deterministic incumbent: greedy 2-cycles, then one chain per donor."""
    E = len(src)
    emap: Dict[Tuple[int, int], int] = {}
    for j in range(E):
        key = (int(src[j]), int(dst[j]))
        if key not in emap or ew[j] > ew[emap[key]]:
            emap[key] = j
    used: set[int] = set()
    structs: List[Tuple[List[int], bool]] = []
    value = 0.0
    if k >= 2:
        cands = []
        for (u, v), j in emap.items():
            if u < v and is_pair[u] and is_pair[v] and (v, u) in emap:
                jr = emap[(v, u)]
                cands.append((-(ew[j] + ew[jr]), u, v, j, jr))
        for negw, u, v, j, jr in sorted(cands):
            if u in used or v in used:
                continue
            used.update((u, v))
            structs.append(([j, jr], True))
            value += -negw
    is_wl = kind == int(NodeKind.WL)
    can_term = is_wl | (is_pwl if not f.require_wl_terminus else np.zeros_like(is_pwl))
    out_adj: Dict[int, List[Tuple[int, int]]] = {}
    for (u, v), j in sorted(emap.items()):
        out_adj.setdefault(u, []).append((v, j))
    for d in np.nonzero(is_dd)[0]:
        best: Optional[Tuple[float, List[int]]] = None
        for p, j1 in out_adj.get(int(d), ()):
            if p in used:
                continue
            if can_term[p]:
                cand = (float(ew[j1]), [j1])
                if best is None or cand[0] > best[0]:
                    best = cand
            if k >= 2 and is_pair[p]:
                for t, j2 in out_adj.get(p, ()):
                    if t in used or t == d or not can_term[t]:
                        continue
                    cand = (float(ew[j1] + ew[j2]), [j1, j2])
                    if best is None or cand[0] > best[0]:
                        best = cand
        if best is not None:
            seq = best[1]
            used.add(int(d))
            for j in seq:
                used.add(int(dst[j]))
            structs.append((seq, False))
            value += best[0]
    return value, structs


def _split_components(
    sel: np.ndarray, src: np.ndarray, dst: np.ndarray, k: int
) -> Tuple[List[Tuple[List[int], bool]], List[List[int]]]:
    """Split selected edges into structures; over-long cycles reported apart.

    Returns ([(ordered edge list, is_cycle)], [over-long cycle edge lists]).
    Chains cannot exceed k edges by construction of the slot variables.
    """
    chosen = [int(j) for j in np.nonzero(sel)[0]]
    succ = {int(src[j]): j for j in chosen}
    pred = {int(dst[j]): j for j in chosen}
    used: set[int] = set()
    structs: List[Tuple[List[int], bool]] = []
    long_cycles: List[List[int]] = []
    for j in chosen:
        if j in used:
            continue
        first = j
        back = {j}
        is_cycle = False
        while int(src[first]) in pred:
            p = pred[int(src[first])]
            if p in back:
                is_cycle = True
                break
            back.add(p)
            first = p
        comp = [first]
        members = {first}
        cur = first
        while int(dst[cur]) in succ:
            nxt = succ[int(dst[cur])]
            if nxt in members:
                break
            comp.append(nxt)
            members.add(nxt)
            cur = nxt
        used.update(members)
        if is_cycle and len(comp) > k:
            long_cycles.append(comp)
        else:
            structs.append((comp, is_cycle))
    return structs, long_cycles


def _short_cycle_cover(
    comp: List[int],
    src: np.ndarray,
    dst: np.ndarray,
    g: ExchangeGraph,
    edge_ids: Sequence[int],
    k: int,
) -> Optional[List[Tuple[List[int], bool]]]:
    """Cover an over-long cycle's nodes with 2..k-cycles over existing edges.

    Under interchangeable unit weights every alternating even cycle admits
    such a cover, which has the same total edge count, so accepting it closes
    the node without any cutting.  Returns None when no cover exists.
    """
    nodes = sorted({int(src[j]) for j in comp} | {int(dst[j]) for j in comp})
    if len(nodes) > 24:
        return None
    emap: Dict[Tuple[int, int], int] = {}
    for j, ei in enumerate(edge_ids):
        a, b = int(src[j]), int(dst[j])
        if a in nodes and b in nodes:
            if (a, b) not in emap:
                emap[(a, b)] = j

    dead: set[frozenset] = set()

    def rec(remaining: frozenset) -> Optional[List[List[int]]]:
        if not remaining:
            return []
        if remaining in dead:
            return None
        u = min(remaining)
        rest = sorted(remaining - {u})
        for v in rest:
            if (u, v) in emap and (v, u) in emap:
                sub = rec(remaining - {u, v})
                if sub is not None:
                    return [[emap[(u, v)], emap[(v, u)]]] + sub
        if k >= 3:
            for v in rest:
                if (u, v) not in emap:
                    continue
                for t in rest:
                    if t == v or (v, t) not in emap or (t, u) not in emap:
                        continue
                    sub = rec(remaining - {u, v, t})
                    if sub is not None:
                        return [[emap[(u, v)], emap[(v, t)], emap[(t, u)]]] + sub
        dead.add(remaining)
        return None

    cover = rec(frozenset(nodes))
    if cover is None:
        return None
    return [(seq, True) for seq in cover]


def _over_long_component(
    sel: np.ndarray, src: np.ndarray, dst: np.ndarray, k: int
) -> Optional[Tuple[List[int], bool]]:
    """First connected component with more than k edges, in walk order.

    Selected edges give every node at most one successor and one predecessor,
    so components are simple paths or cycles.  Returns (ordered edge columns,
    is_cycle) or None.
    """
    chosen = [int(j) for j in np.nonzero(sel)[0]]
    if len(chosen) <= k:
        return None
    succ = {int(src[j]): j for j in chosen}
    pred = {int(dst[j]): j for j in chosen}
    seen: set[int] = set()
    for j0 in chosen:
        if j0 in seen:
            continue
        first = j0
        back: set[int] = {j0}
        is_cycle = False
        while int(src[first]) in pred:
            p = pred[int(src[first])]
            if p in back:
                is_cycle = True
                break
            back.add(p)
            first = p
        comp = [first]
        members = {first}
        cur = first
        while int(dst[cur]) in succ:
            nxt = succ[int(dst[cur])]
            if nxt in members:
                break
            comp.append(nxt)
            members.add(nxt)
            cur = nxt
        seen.update(members)
        if len(comp) > k:
            return comp, is_cycle
    return None


def _window_cuts(comp: List[int], is_cycle: bool, k: int) -> List[Tuple[int, ...]]:
    """Valid inequalities for an over-long component.

    Consecutive selected edges share a pair-kind interior node, and per-copy
    conservation (pairs give iff they receive; dual-registered pairs give
    only when they receive) forces both edges into the same copy.  Hence any
    k+1 consecutive edges of a path or cycle would land in one copy and
    exceed its size cap: their sum is at most k in every feasible solution.
    """
    m = len(comp)
    cuts = []
    if is_cycle:
        for i in range(m):
            cuts.append(tuple(comp[(i + j) % m] for j in range(k + 1)))
    else:
        for i in range(m - k):
            cuts.append(tuple(comp[i + j] for j in range(k + 1)))
    return cuts


def _aggregate_to_exchanges(
    g: ExchangeGraph,
    cols: Sequence[int],
    sel: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
) -> List[Exchange]:
    chosen = [int(j) for j in np.nonzero(sel)[0]]
    if not chosen:
        return []
    succ: Dict[int, int] = {}
    indeg: Dict[int, int] = {}
    for j in chosen:
        succ[int(src[j])] = j
        indeg[int(dst[j])] = j
    used: set[int] = set()
    exchanges: List[Exchange] = []
    # paths first: start nodes with an out-edge but no in-edge
    starts = sorted(v for v in succ if v not in indeg)
    for v in starts:
        seq = []
        a = v
        while a in succ and succ[a] not in used:
            j = succ[a]
            seq.append(j)
            used.add(j)
            a = int(dst[j])
        exchanges.append(_edge_cols_to_exchange(g, cols, seq, CHAIN))
    # remaining edges form cycles
    for j in chosen:
        if j in used:
            continue
        seq = [j]
        used.add(j)
        a = int(dst[j])
        while a != int(src[j]):
            nxt = succ[a]
            seq.append(nxt)
            used.add(nxt)
            a = int(dst[nxt])
        exchanges.append(_edge_cols_to_exchange(g, cols, seq, CYCLE))
    return exchanges


def _edge_cols_to_exchange(
    g: ExchangeGraph, cols: Sequence[int], seq: List[int], kind: str
) -> Exchange:
    edges = [g.edges[cols[j]] for j in seq]
    if kind == CYCLE:
        node_ids = [e.src for e in edges]
        pivot = node_ids.index(min(node_ids))
        edges = edges[pivot:] + edges[:pivot]
        node_ids = [e.src for e in edges]
    else:
        node_ids = [edges[0].src] + [e.dst for e in edges]
    return Exchange(
        kind=kind,
        edges=tuple(edges),
        node_ids=tuple(node_ids),
        total_weight=float(sum(e.weight for e in edges)),
    )


# ---------------------------------------------------------------------------
# class-level model for symmetric pools
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class PairClass:
    """Blood-group signature of a pair; pairs sharing it are interchangeable."""

    recip: int
    donor: int
    pwl: bool


@dataclass
class ClassSolution:
    value: float
    cycles: Dict[Tuple[PairClass, PairClass], int]
    chains: Dict[Tuple[int, PairClass, int], int]
    pwl_two: Dict[Tuple[int, PairClass, PairClass], int]
    pwl_one: Dict[Tuple[int, PairClass], int]
    directs: Dict[Tuple[int, int], int]


def solve_class_model(
    class_counts: Mapping[PairClass, int],
    dd_counts: Sequence[int],
    wl_caps: Sequence[int],
    k: int,
    require_wl_terminus: bool = False,
) -> Optional[ClassSolution]:
    """Exact optimum of a type-uniform unit-weight pool, counted by class.

    Valid only when compatibility is fully determined by blood-group
    signature (complete class-to-class edges), all weights are 1, and
    ``k <= 2``; returns None otherwise so callers fall back to the generic
    path.  The reduced problem has one integer count per structure shape and
    is solved exactly as a small integer program.
    """
    if k not in (1, 2):
        return None
    classes = sorted(c for c, cnt in class_counts.items() if cnt > 0)
    groups = [int(b) for b in BloodGroup]
    ok = lambda d, r: abo_compatible(BloodGroup(d), BloodGroup(r))

    values: list[float] = []
    tags: list[tuple] = []
    cons: list[dict] = []  # row-key -> coefficient
    if k >= 2:
        for i, c1 in enumerate(classes):
            for c2 in classes[i:]:
                if not (ok(c1.donor, c2.recip) and ok(c2.donor, c1.recip)):
                    continue
                if c1 == c2 and class_counts[c1] < 2:
                    continue
                values.append(2.0)
                tags.append(("cycle", c1, c2))
                cons.append({("p", c1): 2.0} if c1 == c2 else {("p", c1): 1.0, ("p", c2): 1.0})
        for gbg in groups:
            if dd_counts[gbg] <= 0:
                continue
            for c in classes:
                if not ok(gbg, c.recip):
                    continue
                for t in groups:
                    if wl_caps[t] <= 0 or not ok(c.donor, t):
                        continue
                    values.append(2.0)
                    tags.append(("chain", gbg, c, t))
                    cons.append({("d", gbg): 1.0, ("p", c): 1.0, ("w", t): 1.0})
                if not require_wl_terminus:
                    for c2 in classes:
                        if not c2.pwl or not ok(c.donor, c2.recip):
                            continue
                        if c2 == c and class_counts[c] < 2:
                            continue
                        values.append(2.0)
                        tags.append(("pwl2", gbg, c, c2))
                        row = {("d", gbg): 1.0}
                        if c2 == c:
                            row[("p", c)] = 2.0
                        else:
                            row[("p", c)] = 1.0
                            row[("p", c2)] = 1.0
                        cons.append(row)
    for gbg in groups:
        if dd_counts[gbg] <= 0:
            continue
        if not require_wl_terminus:
            for c in classes:
                if c.pwl and ok(gbg, c.recip):
                    values.append(1.0)
                    tags.append(("pwl1", gbg, c))
                    cons.append({("d", gbg): 1.0, ("p", c): 1.0})
        for t in groups:
            if wl_caps[t] > 0 and ok(gbg, t):
                values.append(1.0)
                tags.append(("direct", gbg, t))
                cons.append({("d", gbg): 1.0, ("w", t): 1.0})

    sol = ClassSolution(0.0, {}, {}, {}, {}, {})
    if not values:
        return sol

    row_keys = sorted(
        {key for row in cons for key in row}, key=lambda kk: (kk[0], repr(kk[1]))
    )
    row_index = {key: r for r, key in enumerate(row_keys)}
    caps = np.zeros(len(row_keys))
    for key, r in row_index.items():
        if key[0] == "p":
            caps[r] = class_counts[key[1]]
        elif key[0] == "d":
            caps[r] = dd_counts[key[1]]
        else:
            caps[r] = wl_caps[key[1]]
    A = np.zeros((len(row_keys), len(values)))
    for j, row in enumerate(cons):
        for key, coef in row.items():
            A[row_index[key], j] = coef
    res = milp(
        c=-np.array(values),
        constraints=LinearConstraint(A, -np.inf, caps),
        integrality=np.ones(len(values)),
        bounds=Bounds(0, np.inf),
    )
    if res.status != 0:
        raise InvariantViolation(f"class model solve failed: {res.message}")
    counts = np.round(res.x).astype(int)
    sol.value = float(np.dot(counts, values))
    for j, cnt in enumerate(counts):
        if cnt <= 0:
            continue
        tag = tags[j]
        if tag[0] == "cycle":
            sol.cycles[(tag[1], tag[2])] = int(cnt)
        elif tag[0] == "chain":
            sol.chains[(tag[1], tag[2], tag[3])] = int(cnt)
        elif tag[0] == "pwl2":
            sol.pwl_two[(tag[1], tag[2], tag[3])] = int(cnt)
        elif tag[0] == "pwl1":
            sol.pwl_one[(tag[1], tag[2])] = int(cnt)
        else:
            sol.directs[(tag[1], tag[2])] = int(cnt)
    return sol


def _classes_of_graph(arr: GraphArrays) -> Optional[dict]:
    """Class counts and member buckets, or None when the pool is not class-shaped."""
    g = arr.g
    class_nodes: Dict[PairClass, list[int]] = {}
    dd_nodes: Dict[int, list[int]] = {b: [] for b in range(4)}
    wl_slots: Dict[int, list[int]] = {b: [] for b in range(4)}
    for i, nd in enumerate(g.nodes):
        if nd.kind == NodeKind.DD:
            dd_nodes[int(nd.donor_bg)].append(i)
        elif nd.kind == NodeKind.WL:
            wl_slots[int(nd.recipient_bg)].extend([i] * arr.caps[i])
        elif nd.kind == NodeKind.PAIR:
            if len(nd.donors) != 1:
                return None
            key = PairClass(int(nd.recipient_bg), int(nd.donors[0][1]), nd.is_pwl)
            class_nodes.setdefault(key, []).append(i)
        else:
            return None  # compatible pairs break interchangeability
    return {"pairs": class_nodes, "dd": dd_nodes, "wl": wl_slots}


def _project_class_solution(
    arr: GraphArrays, sol: ClassSolution, buckets: dict
) -> List[Exchange]:
    pair_b = {c: list(v) for c, v in buckets["pairs"].items()}
    dd_b = {b: list(v) for b, v in buckets["dd"].items()}
    wl_b = {b: list(v) for b, v in buckets["wl"].items()}

    def take(lst: list, m: int = 1):
        out = lst[:m]
        del lst[:m]
        return out

    rows: list[tuple[list[int], int]] = []
    for (c1, c2), cnt in sorted(sol.cycles.items()):
        for _ in range(cnt):
            if c1 == c2:
                u, v = take(pair_b[c1], 2)
            else:
                (u,) = take(pair_b[c1])
                (v,) = take(pair_b[c2])
            rows.append((sorted((u, v)), 0))
    for (gbg, c, t), cnt in sorted(sol.chains.items()):
        for _ in range(cnt):
            (d,) = take(dd_b[gbg])
            (p,) = take(pair_b[c])
            (s,) = take(wl_b[t])
            rows.append(([d, p, s], 1))
    for (gbg, c1, c2), cnt in sorted(sol.pwl_two.items()):
        for _ in range(cnt):
            (d,) = take(dd_b[gbg])
            if c1 == c2:
                p1, p2 = take(pair_b[c1], 2)
            else:
                (p1,) = take(pair_b[c1])
                (p2,) = take(pair_b[c2])
            rows.append(([d, p1, p2], 1))
    for (gbg, c), cnt in sorted(sol.pwl_one.items()):
        for _ in range(cnt):
            (d,) = take(dd_b[gbg])
            (p,) = take(pair_b[c])
            rows.append(([d, p], 1))
    for (gbg, t), cnt in sorted(sol.directs.items()):
        for _ in range(cnt):
            (d,) = take(dd_b[gbg])
            (s,) = take(wl_b[t])
            rows.append(([d, s], 1))
    width = max((len(r) for r, _ in rows), default=2)
    out = []
    for nodes, kind_code in rows:
        row = np.full(width, -1, dtype=np.int32)
        row[: len(nodes)] = nodes
        out.append(row_to_exchange(arr, row, kind_code))
    return out


# ---------------------------------------------------------------------------
# packing solver
# ---------------------------------------------------------------------------


def solve_packing(
    g: ExchangeGraph,
    k: int,
    include_cn_constraint: bool = False,
    require_wl_terminus: bool = False,
) -> MatchPlan:
    """Enumerate bounded structures, then pick an optimal node-disjoint subset.

    Agrees with :func:`solve_bb` on the objective by construction; selected
    plans may differ where ties exist.
    """
    if k < 1:
        raise InputError("chain/cycle bound k must be >= 1")
    arr = _arrays(g)
    if (
        g.type_uniform
        and k <= 2
        and not include_cn_constraint
        and np.all(arr.W[arr.adj] == 1.0)
    ):
        buckets = _classes_of_graph(arr)
        if buckets is not None:
            counts = {c: len(v) for c, v in buckets["pairs"].items()}
            dd = [len(buckets["dd"][b]) for b in range(4)]
            wl = [len(buckets["wl"][b]) for b in range(4)]
            sol = solve_class_model(counts, dd, wl, k, require_wl_terminus)
            if sol is not None:
                exchanges = _project_class_solution(arr, sol, buckets)
                plan = _make_plan(g, exchanges)
                if abs(plan.objective - sol.value) > 1e-6:
                    raise InvariantViolation("class projection value mismatch")
                return plan
    struct = build_structures(arr, k, require_wl_terminus, include_cn_constraint)
    sel_rows = _pack_structures(struct, arr.caps)
    exchanges = [
        row_to_exchange(arr, struct.rows[i], int(struct.kinds[i])) for i in sel_rows
    ]
    return _make_plan(g, exchanges)


def _pack_structures(struct: StructSet, caps: np.ndarray) -> List[int]:
    """Indexes (into struct rows) of a maximum-weight capacity-feasible subset."""
    m = struct.rows.shape[0]
    if m == 0:
        return []
    keys = tuple(struct.rows[:, j] for j in reversed(range(struct.width)))
    order = np.lexsort(keys + (-struct.weights,))
    rows = np.ascontiguousarray(struct.rows[order])
    w = struct.weights[order]
    integral = _weights_integral(w)

    chosen_mask, best_val = kernels.greedy_pack(rows, w, caps)
    best_pick = list(np.nonzero(chosen_mask)[0])
    all_active = np.ones(m, dtype=np.uint8)
    root_share = kernels.share_bound(rows, w, all_active, caps.astype(np.int64))
    if _improves(root_share, best_val, integral):
        lp_val, x, duals = _structure_lp(rows, w, caps)
        if np.all(np.abs(x - np.round(x)) <= _INT_TOL):
            sel = np.nonzero(x > 0.5)[0]
            best_val, best_pick = float(w[sel].sum()), list(sel)
        elif _improves(lp_val, best_val, integral):
            # LP-guided incumbent: prefer structures the relaxation likes
            keys2 = tuple(rows[:, j] for j in reversed(range(struct.width)))
            guided = np.lexsort(keys2 + (np.round(-x, 9),))
            gsel, gval = kernels.greedy_pack(
                np.ascontiguousarray(rows[guided]), w[guided], caps
            )
            if gval > best_val:
                best_val = gval
                best_pick = [int(guided[i]) for i in np.nonzero(gsel)[0]]
            if _improves(lp_val, best_val, integral):
                best_val, best_pick = _pack_bb(
                    rows, w, caps, duals, best_val, best_pick, integral
                )
    return sorted(int(order[i]) for i in best_pick)


def _structure_lp(
    rows: np.ndarray, w: np.ndarray, caps: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """LP relaxation over structures: (bound, fractional solution, node duals)."""
    m, width = rows.shape
    n = caps.shape[0]
    ri, ci = [], []
    for j in range(width):
        col = rows[:, j]
        valid = np.nonzero(col >= 0)[0]
        ci.extend(int(x) for x in valid)
        ri.extend(int(col[x]) for x in valid)
    A = sparse.csr_matrix(
        (np.ones(len(ri)), (ri, ci)), shape=(n, m), dtype=np.float64
    )
    res = linprog(
        -w,
        A_ub=A,
        b_ub=caps.astype(np.float64),
        bounds=(0, 1),
        method="highs",
    )
    if res.status != 0:
        raise InvariantViolation(f"packing LP failed: {res.message}")
    duals = np.maximum(-res.ineqlin.marginals, 0.0)
    return -res.fun, res.x, duals


def _pack_bb(
    rows: np.ndarray,
    w: np.ndarray,
    caps: np.ndarray,
    duals: np.ndarray,
    best_val: float,
    best_pick: List[int],
    integral: bool,
) -> tuple[float, List[int]]:
    """Depth-first exact search over the sorted structure list.

    The bound combines the remaining-weight suffix with a Lagrangian bound
    from the root LP duals y >= 0: any completion S satisfies
    sum_{e in S} w_e <= sum_v y_v avail_v + sum_{e selectable} (w_e - y^T e)^+.
    """
    m, width = rows.shape
    y = duals
    ysum = np.zeros(m)
    for j in range(width):
        col = rows[:, j]
        ok = col >= 0
        contrib = y[np.where(ok, col, 0)]
        contrib[~ok] = 0.0
        ysum += contrib
    rc_pos = np.maximum(w - ysum, 0.0)

    def _mask_selectable(pos: int, avail: np.ndarray) -> np.ndarray:
        sub = rows[pos:]
        ok = np.ones(sub.shape[0], dtype=bool)
        for j in range(width):
            col = sub[:, j]
            v = col >= 0
            ok &= ~v | (avail[np.where(v, col, 0)] > 0)
        return ok

    stack: list[tuple[int, np.ndarray, float, tuple]] = [
        (0, caps.astype(np.int64), 0.0, ())
    ]
    while stack:
        pos, avail, val, picked = stack.pop()
        while pos < m and not _selectable(rows[pos], avail):
            pos += 1
        if pos >= m:
            if val > best_val + 1e-9:
                best_val, best_pick = val, list(picked)
            continue
        ok = _mask_selectable(pos, avail)
        lag = float((y * np.maximum(avail, 0)).sum() + rc_pos[pos:][ok].sum())
        bound = val + min(float(w[pos:][ok].sum()), lag)
        if not _improves(bound, best_val, integral):
            continue
        stack.append((pos + 1, avail, val, picked))
        av2 = avail.copy()
        for j in rows[pos]:
            if j < 0:
                break
            av2[j] -= 1
        stack.append((pos + 1, av2, val + w[pos], picked + (pos,)))
    return best_val, best_pick


def _selectable(row: np.ndarray, avail: np.ndarray) -> bool:
    for j in row:
        if j < 0:
            return True
        if avail[j] <= 0:
            return False
    return True


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def oracle_bruteforce(
    g: ExchangeGraph, k: int, include_cn_constraint: bool = False
) -> float:
    """Exact optimum by exhaustive search; guarded to 14 nodes.

    Kept deliberately independent of the enumeration module and of any LP
    machinery: structures are generated from permutations over the raw edge
    dictionary, and the packing is a plain recursion.
    """
    if g.num_nodes > 14:
        raise InputError("brute-force oracle is limited to 14 nodes")
    if any(c != 1 for c in g.capacity.values()):
        raise InputError("brute-force oracle requires unit capacities")
    if k < 1:
        raise InputError("chain/cycle bound k must be >= 1")

    ew: Dict[Tuple[int, int], float] = {}
    for e in g.edges:
        if e.src == e.dst:
            continue
        key = (e.src, e.dst)
        if key not in ew or e.weight > ew[key]:
            ew[key] = e.weight
    thr = {n.id: n.self_weight for n in g.nodes if n.kind == NodeKind.CN}

    def edge_ok(u: int, v: int) -> bool:
        if (u, v) not in ew:
            return False
        if include_cn_constraint and v in thr and ew[(u, v)] < thr[v]:
            return False
        return True

    pair_ids = [n.id for n in g.nodes if n.kind in (NodeKind.PAIR, NodeKind.CN)]
    dd_ids = [n.id for n in g.nodes if n.kind == NodeKind.DD]
    term_ids = {
        n.id for n in g.nodes if n.kind == NodeKind.WL or n.is_pwl
    }

    structures: list[tuple[frozenset, float]] = []
    for size in range(2, k + 1):
        for combo in itertools.combinations(pair_ids, size):
            lead = min(combo)
            for perm in itertools.permutations(combo):
                if perm[0] != lead:
                    continue
                cyc = list(perm) + [perm[0]]
                if all(edge_ok(a, b) for a, b in zip(cyc, cyc[1:])):
                    weight = sum(ew[(a, b)] for a, b in zip(cyc, cyc[1:]))
                    structures.append((frozenset(perm), weight))

    mids = set(pair_ids)

    def grow(path: list[int], weight: float) -> None:
        head = path[-1]
        depth = len(path) - 1
        for v in sorted(term_ids | mids):
            if v in path or not edge_ok(head, v):
                continue
            w2 = weight + ew[(head, v)]
            if v in term_ids:
                structures.append((frozenset(path + [v]), w2))
            if v in mids and depth + 1 < k:
                grow(path + [v], w2)

    for d in dd_ids:
        grow([d], 0.0)

    structures.sort(key=lambda s: -s[1])
    weights = [s[1] for s in structures]
    tail = [0.0] * (len(weights) + 1)
    for i in range(len(weights) - 1, -1, -1):
        tail[i] = tail[i + 1] + weights[i]

    best = 0.0

    def search(i: int, used: frozenset, val: float) -> None:
        nonlocal best
        if val > best:
            best = val
        if i >= len(structures) or val + tail[i] <= best:
            return
        nodes, wgt = structures[i]
        if not (nodes & used):
            search(i + 1, used | nodes, val + wgt)
        search(i + 1, used, val)

    search(0, frozenset(), 0.0)
    return best


# ---------------------------------------------------------------------------
# plan validation
# ---------------------------------------------------------------------------


def validate_plan(
    g: ExchangeGraph,
    plan: MatchPlan,
    k: int,
    include_cn_constraint: bool = False,
    require_wl_terminus: bool = False,
) -> List[str]:
    """Check every structural guarantee; returns human-readable violations."""
    errs: List[str] = []
    emap = _edge_index_map(g)
    usage: Dict[int, int] = {}
    thr = {n.id: n.self_weight for n in g.nodes if n.kind == NodeKind.CN}
    copies = [ex.copy_index for ex in plan.exchanges]
    if any(c is None for c in copies):
        errs.append("exchange without copy index")
    elif len(set(copies)) != len(copies):
        errs.append("duplicate copy indexes")

    for xi, ex in enumerate(plan.exchanges):
        for e in ex.edges:
            if (e.src, e.dst, e.donor_id) not in emap:
                errs.append(f"exchange {xi}: edge {e.src}->{e.dst} not in graph")
        if abs(ex.total_weight - sum(e.weight for e in ex.edges)) > 1e-9:
            errs.append(f"exchange {xi}: weight mismatch")
        if len(set(ex.node_ids)) != len(ex.node_ids):
            errs.append(f"exchange {xi}: repeated node")
        kinds = [g.node(n).kind for n in ex.node_ids]
        if ex.kind == CYCLE:
            if not (2 <= len(ex.edges) <= k):
                errs.append(f"exchange {xi}: cycle length {len(ex.edges)} outside 2..{k}")
            if any(kd not in (NodeKind.PAIR, NodeKind.CN) for kd in kinds):
                errs.append(f"exchange {xi}: cycle contains a non-pair node")
            seq = list(ex.node_ids) + [ex.node_ids[0]]
            if ex.node_ids[0] != min(ex.node_ids):
                errs.append(f"exchange {xi}: cycle not in canonical rotation")
        else:
            if not (1 <= len(ex.edges) <= k):
                errs.append(f"exchange {xi}: chain length {len(ex.edges)} outside 1..{k}")
            if kinds[0] != NodeKind.DD:
                errs.append(f"exchange {xi}: chain does not start at a DD")
            last = g.node(ex.node_ids[-1])
            if not (last.kind == NodeKind.WL or last.is_pwl):
                errs.append(f"exchange {xi}: chain terminus is not WL or PWL")
            if require_wl_terminus and last.kind != NodeKind.WL:
                errs.append(f"exchange {xi}: PWL terminus with WL-only rule on")
            if any(
                kd not in (NodeKind.PAIR, NodeKind.CN) for kd in kinds[1:-1]
            ):
                errs.append(f"exchange {xi}: chain interior contains non-pair node")
            seq = list(ex.node_ids)
        for a, b, e in zip(seq, seq[1:], ex.edges):
            if e.src != a or e.dst != b:
                errs.append(f"exchange {xi}: edges do not follow node order")
                break
        if include_cn_constraint:
            for e in ex.edges:
                if e.dst in thr and e.weight < thr[e.dst]:
                    errs.append(
                        f"exchange {xi}: compatible pair {e.dst} receives below threshold"
                    )
        for nid in ex.node_ids:
            usage[nid] = usage.get(nid, 0) + 1

    for nid, cnt in usage.items():
        if cnt > g.capacity[nid]:
            errs.append(f"node {nid} used {cnt}x with capacity {g.capacity[nid]}")
    if abs(plan.objective - sum(ex.total_weight for ex in plan.exchanges)) > 1e-9:
        errs.append("plan objective does not equal sum of exchange weights")
    return errs
