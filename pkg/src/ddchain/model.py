"""Domain types: participants, ABO compatibility, and compatibility-graph construction.

The pool is a directed graph over four participant kinds: deceased donors
(out-edges only), donor-recipient pairs (registered for exchange only, or
dual-registered with the deceased-donor wait-list), compatible pairs seeking
a better-matched kidney, and wait-list patients (in-edges only).  An edge
donor -> recipient exists exactly when the donor's blood group can serve the
recipient's.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "BloodGroup",
    "NodeKind",
    "Node",
    "Edge",
    "ExchangeGraph",
    "WeightPolicy",
    "InputError",
    "abo_compatible",
    "build_graph",
    "weight_policy_unit",
    "dd_node",
    "pair_node",
    "compatible_pair_node",
    "wl_node",
    "load_snapshot",
    "save_snapshot",
    "nodes_to_snapshot_dict",
]


class InputError(ValueError):
    """Raised for malformed user input (duplicate ids, bad config values)."""


class BloodGroup(IntEnum):
    """ABO groups with a fixed total order for deterministic iteration."""

    O = 0
    A = 1
    B = 2
    AB = 3

    @classmethod
    def from_str(cls, s: str) -> "BloodGroup":
        try:
            return cls[s.upper()]
        except KeyError:
            raise InputError(f"unknown blood group {s!r}") from None

    def __str__(self) -> str:  # noqa: D105
        return self.name


# donor group -> set of recipient groups it can serve
_ABO_OK = np.zeros((4, 4), dtype=bool)
for _d, _targets in {
    BloodGroup.O: (BloodGroup.O, BloodGroup.A, BloodGroup.B, BloodGroup.AB),
    BloodGroup.A: (BloodGroup.A, BloodGroup.AB),
    BloodGroup.B: (BloodGroup.B, BloodGroup.AB),
    BloodGroup.AB: (BloodGroup.AB,),
}.items():
    for _r in _targets:
        _ABO_OK[int(_d), int(_r)] = True


def abo_compatible(donor: BloodGroup, recipient: BloodGroup) -> bool:
    """True iff `recipient` can accept a kidney from `donor` under ABO rules."""
    return bool(_ABO_OK[int(donor), int(recipient)])


class NodeKind(IntEnum):
    DD = 0
    PAIR = 1
    CN = 2
    WL = 3


REGISTRY_P = "P"
REGISTRY_PWL = "PWL"


@dataclass(frozen=True)
class Node:
    """One participant.

    Fields are kind-dependent: a DD carries only `donor_bg`; a PAIR or CN
    carries `recipient_bg` plus one or more `(donor_id, BloodGroup)` donors;
    a WL patient carries only `recipient_bg`.  `registry` distinguishes
    exchange-only pairs ("P") from dual-registered ones ("PWL").
    """

    id: int
    kind: NodeKind
    donor_bg: Optional[BloodGroup] = None
    recipient_bg: Optional[BloodGroup] = None
    donors: Tuple[Tuple[int, BloodGroup], ...] = ()
    registry: str = REGISTRY_P
    arrival_round: int = 0
    self_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == NodeKind.DD:
            if self.donor_bg is None:
                raise InputError(f"DD node {self.id} needs donor_bg")
        elif self.kind == NodeKind.WL:
            if self.recipient_bg is None:
                raise InputError(f"WL node {self.id} needs recipient_bg")
        else:
            if self.recipient_bg is None or not self.donors:
                raise InputError(f"pair node {self.id} needs recipient_bg and donors")
            if self.registry not in (REGISTRY_P, REGISTRY_PWL):
                raise InputError(f"node {self.id}: registry must be P or PWL")
            if self.kind == NodeKind.CN and not any(
                abo_compatible(bg, self.recipient_bg) for _, bg in self.donors
            ):
                raise InputError(
                    f"compatible pair {self.id} has no ABO-compatible own donor"
                )

    @property
    def is_pwl(self) -> bool:
        return self.kind == NodeKind.PAIR and self.registry == REGISTRY_PWL


def dd_node(id: int, donor_bg: BloodGroup) -> Node:
    return Node(id=id, kind=NodeKind.DD, donor_bg=donor_bg)


def pair_node(
    id: int,
    recipient_bg: BloodGroup,
    donors: Sequence[Tuple[int, BloodGroup]] | BloodGroup,
    registry: str = REGISTRY_P,
    arrival_round: int = 0,
) -> Node:
    if isinstance(donors, BloodGroup):
        donors = [(0, donors)]
    return Node(
        id=id,
        kind=NodeKind.PAIR,
        recipient_bg=recipient_bg,
        donors=tuple((int(d), BloodGroup(b)) for d, b in donors),
        registry=registry,
        arrival_round=arrival_round,
    )


def compatible_pair_node(
    id: int,
    recipient_bg: BloodGroup,
    donors: Sequence[Tuple[int, BloodGroup]] | BloodGroup,
    self_weight: float,
    arrival_round: int = 0,
) -> Node:
    if isinstance(donors, BloodGroup):
        donors = [(0, donors)]
    return Node(
        id=id,
        kind=NodeKind.CN,
        recipient_bg=recipient_bg,
        donors=tuple((int(d), BloodGroup(b)) for d, b in donors),
        self_weight=float(self_weight),
        arrival_round=arrival_round,
    )


def wl_node(id: int, recipient_bg: BloodGroup) -> Node:
    return Node(id=id, kind=NodeKind.WL, recipient_bg=recipient_bg)


@dataclass(frozen=True)
class Edge:
    """Directed transplant offer: donor `donor_id` of node `src` to node `dst`."""

    src: int
    dst: int
    donor_id: int
    weight: float


@dataclass(frozen=True)
class WeightPolicy:
    """Per-edge scoring hook.

    `score(donor_bg, recipient_bg, src, dst)` returns the edge weight.  The
    simulation default assigns 1.0 everywhere; richer policies (HLA mismatch,
    age, dialysis time) can be plugged in but no concrete table ships.
    """

    name: str
    score: Callable[[BloodGroup, BloodGroup, Node, Node], float]


def weight_policy_unit() -> WeightPolicy:
    """Policy assigning weight 1.0 to every edge (the simulation default)."""
    return WeightPolicy(name="unit", score=lambda db, rb, s, t: 1.0)


class ExchangeGraph:
    """Directed compatibility graph with per-edge weights and donor labels.

    Nodes are immutable; edge order is deterministic (sorted by
    (src, dst, donor_id)).  `capacity` is how many incoming transplants a node
    may absorb; it is 1 everywhere for static solves and may exceed 1 only for
    synthetic wait-list sinks created by the simulator.
    """

    def __init__(
        self,
        nodes: Sequence[Node],
        edges: Sequence[Edge],
        capacity: Optional[Mapping[int, int]] = None,
        type_uniform: bool = False,
    ):
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate node ids")
        self.nodes: Tuple[Node, ...] = tuple(sorted(nodes, key=lambda n: n.id))
        self.index_of = {n.id: i for i, n in enumerate(self.nodes)}
        for e in edges:
            if e.src not in self.index_of or e.dst not in self.index_of:
                raise InputError(f"edge ({e.src},{e.dst}) references unknown node")
        self.edges: Tuple[Edge, ...] = tuple(
            sorted(edges, key=lambda e: (e.src, e.dst, e.donor_id))
        )
        self.capacity = {n.id: 1 for n in self.nodes}
        if capacity:
            self.capacity.update({int(k): int(v) for k, v in capacity.items()})
        # True when compatibility and weights are fully determined by
        # (kind, blood groups, registry); lets solvers use symmetry.
        self.type_uniform = type_uniform

        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        inn: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for idx, e in enumerate(self.edges):
            out[e.src].append(idx)
            inn[e.dst].append(idx)
        self.out_edges = {k: tuple(v) for k, v in out.items()}
        self.in_edges = {k: tuple(v) for k, v in inn.items()}

    def node(self, node_id: int) -> Node:
        return self.nodes[self.index_of[node_id]]

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def kind_counts(self) -> dict[NodeKind, int]:
        counts = {k: 0 for k in NodeKind}
        for n in self.nodes:
            counts[n.kind] += 1
        return counts

    def pair_count(self) -> int:
        """All non-DD, non-WL nodes (PAIR and CN alike)."""
        return sum(1 for n in self.nodes if n.kind in (NodeKind.PAIR, NodeKind.CN))


def _edge_allowed(src: Node, dst: Node) -> bool:
    if src.id == dst.id:
        return False
    if src.kind == NodeKind.WL or dst.kind == NodeKind.DD:
        return False
    return True


def build_graph(
    nodes: Sequence[Node],
    weight_policy: Optional[WeightPolicy] = None,
    knockout_prob: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    type_uniform: Optional[bool] = None,
) -> ExchangeGraph:
    """Construct the complete ABO-compatible edge set over `nodes`.

    Every ordered (donor, recipient) combination allowed by the kind rules
    (no in-edges to DD, no out-edges from WL) gets an edge when the donor's
    group serves the recipient's.  Compatible pairs additionally get their
    self-edge carrying `self_weight`.  `knockout_prob` removes non-self edges
    i.i.d. to mimic tissue-type incompatibility (default 0: ABO only).
    """
    policy = weight_policy or weight_policy_unit()
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate node ids")
    if knockout_prob and rng is None:
        raise InputError("knockout_prob > 0 requires an rng")

    ordered = sorted(nodes, key=lambda n: n.id)
    edges: list[Edge] = []
    for src in ordered:
        if src.kind == NodeKind.WL:
            continue
        donors = (
            ((0, src.donor_bg),) if src.kind == NodeKind.DD else src.donors
        )
        for dst in ordered:
            if not _edge_allowed(src, dst):
                continue
            for donor_id, donor_bg in donors:
                if not abo_compatible(donor_bg, dst.recipient_bg):
                    continue
                if knockout_prob and rng.random() < knockout_prob:
                    continue
                w = float(policy.score(donor_bg, dst.recipient_bg, src, dst))
                edges.append(Edge(src=src.id, dst=dst.id, donor_id=donor_id, weight=w))
    # threshold self-edges for compatible pairs
    for n in ordered:
        if n.kind != NodeKind.CN:
            continue
        own = [d for d in n.donors if abo_compatible(d[1], n.recipient_bg)]
        edges.append(
            Edge(src=n.id, dst=n.id, donor_id=own[0][0], weight=float(n.self_weight))
        )

    uniform = type_uniform
    if uniform is None:
        uniform = (
            knockout_prob == 0.0
            and policy.name == "unit"
            and all(n.kind in (NodeKind.DD, NodeKind.PAIR, NodeKind.WL) for n in ordered)
            and all(
                len(n.donors) <= 1 for n in ordered if n.kind == NodeKind.PAIR
            )
        )
    return ExchangeGraph(ordered, edges, type_uniform=bool(uniform))


# ---------------------------------------------------------------------------
# registry snapshot files
# ---------------------------------------------------------------------------

_KIND_NAMES = {k: k.name for k in NodeKind}
_KIND_FROM_NAME = {k.name: k for k in NodeKind}


def _node_to_dict(n: Node) -> dict:
    d: dict = {"id": n.id, "kind": _KIND_NAMES[n.kind]}
    if n.kind == NodeKind.DD:
        d["blood_groups"] = {"donor": str(n.donor_bg)}
    elif n.kind == NodeKind.WL:
        d["blood_groups"] = {"recipient": str(n.recipient_bg)}
    else:
        d["blood_groups"] = {
            "recipient": str(n.recipient_bg),
            "donors": [{"donor_id": i, "bg": str(b)} for i, b in n.donors],
        }
        d["registry"] = n.registry
        d["arrival_round"] = n.arrival_round
        if n.kind == NodeKind.CN:
            d["self_weight"] = n.self_weight
    return d


def _node_from_dict(d: Mapping) -> Node:
    try:
        kind = _KIND_FROM_NAME[d["kind"]]
        bgs = d["blood_groups"]
        if kind == NodeKind.DD:
            return dd_node(int(d["id"]), BloodGroup.from_str(bgs["donor"]))
        if kind == NodeKind.WL:
            return wl_node(int(d["id"]), BloodGroup.from_str(bgs["recipient"]))
        donors = [
            (int(x["donor_id"]), BloodGroup.from_str(x["bg"])) for x in bgs["donors"]
        ]
        common = dict(
            id=int(d["id"]),
            recipient_bg=BloodGroup.from_str(bgs["recipient"]),
            donors=tuple(donors),
            arrival_round=int(d.get("arrival_round", 0)),
        )
        if kind == NodeKind.CN:
            return Node(kind=NodeKind.CN, self_weight=float(d["self_weight"]), **common)
        return Node(kind=NodeKind.PAIR, registry=d.get("registry", REGISTRY_P), **common)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed node record: {exc}") from exc


def nodes_to_snapshot_dict(nodes: Iterable[Node], weight_policy: str = "unit") -> dict:
    return {
        "weight_policy": weight_policy,
        "nodes": [_node_to_dict(n) for n in sorted(nodes, key=lambda n: n.id)],
    }


def save_snapshot(nodes: Iterable[Node], path: str, weight_policy: str = "unit") -> None:
    with open(path, "w") as fh:
        json.dump(nodes_to_snapshot_dict(nodes, weight_policy), fh, indent=1)
        fh.write("\n")


def load_snapshot(path: str) -> tuple[list[Node], WeightPolicy]:
    """Read a registry snapshot.  Only the "unit" policy round-trips from JSON."""
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"cannot read snapshot {path}: {exc}") from exc
    with fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid snapshot JSON: {exc}") from exc
    if not isinstance(raw, dict) or "nodes" not in raw:
        raise InputError("snapshot must be an object with a 'nodes' list")
    policy_name = raw.get("weight_policy", "unit")
    if policy_name != "unit":
        raise InputError(
            f"snapshot declares weight_policy={policy_name!r}; only 'unit' is loadable"
        )
    nodes = [_node_from_dict(d) for d in raw["nodes"]]
    if len({n.id for n in nodes}) != len(nodes):
        raise InputError("duplicate node ids in snapshot")
    return nodes, weight_policy_unit()
