import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddchain.model import (
    BloodGroup,
    InputError,
    NodeKind,
    WeightPolicy,
    abo_compatible,
    build_graph,
    compatible_pair_node,
    dd_node,
    load_snapshot,
    nodes_to_snapshot_dict,
    pair_node,
    save_snapshot,
    weight_policy_unit,
    wl_node,
)
from ddchain.ilp import solve_packing

BG = BloodGroup

# donor -> recipients it can serve, written out longhand
ABO_TABLE = {
    BG.O: {BG.O, BG.A, BG.B, BG.AB},
    BG.A: {BG.A, BG.AB},
    BG.B: {BG.B, BG.AB},
    BG.AB: {BG.AB},
}


def test_abo_examples():
    assert abo_compatible(BG.O, BG.A) is True
    assert abo_compatible(BG.AB, BG.O) is False
    assert abo_compatible(BG.A, BG.A) is True


@given(st.sampled_from(list(BG)), st.sampled_from(list(BG)))
def test_abo_matches_rule_table(donor, recipient):
    assert abo_compatible(donor, recipient) == (recipient in ABO_TABLE[donor])


def test_blood_group_order_fixed():
    assert [b.name for b in sorted(BG)] == ["O", "A", "B", "AB"]


def test_build_graph_dd_to_wl():
    g = build_graph([dd_node(0, BG.O), wl_node(1, BG.A)])
    assert [(e.src, e.dst, e.weight) for e in g.edges] == [(0, 1, 1.0)]


def test_build_graph_two_cycle():
    g = build_graph([pair_node(0, BG.B, BG.A), pair_node(1, BG.A, BG.B)])
    assert [(e.src, e.dst) for e in g.edges] == [(0, 1), (1, 0)]


def test_build_graph_incompatible_pair_has_no_edge():
    g = build_graph([dd_node(0, BG.AB), wl_node(1, BG.O)])
    assert g.num_edges == 0


def test_build_graph_rejects_duplicate_ids():
    with pytest.raises(InputError):
        build_graph([dd_node(0, BG.O), wl_node(0, BG.A)])


def test_build_graph_deterministic():
    nodes = [
        pair_node(3, BG.A, BG.B),
        dd_node(0, BG.O),
        pair_node(1, BG.B, BG.A),
        wl_node(2, BG.AB),
    ]
    g1 = build_graph(nodes)
    g2 = build_graph(list(reversed(nodes)))
    assert g1.edges == g2.edges


def _brute_force_edges(nodes):
    """Every ABO-compatible ordered combination allowed by the kind rules."""
    expected = set()
    for s in nodes:
        if s.kind == NodeKind.WL:
            continue
        donors = [(0, s.donor_bg)] if s.kind == NodeKind.DD else list(s.donors)
        for t in nodes:
            if t.id == s.id or t.kind == NodeKind.DD:
                continue
            for did, dbg in donors:
                if abo_compatible(dbg, t.recipient_bg):
                    expected.add((s.id, t.id, did))
    return expected


def test_build_graph_completeness_random():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(2, 9))
        nodes = []
        for i in range(n):
            kind = int(rng.integers(0, 3))
            bg = BG(int(rng.integers(0, 4)))
            if kind == 0:
                nodes.append(dd_node(i, bg))
            elif kind == 1:
                nodes.append(wl_node(i, bg))
            else:
                nodes.append(pair_node(i, bg, BG(int(rng.integers(0, 4)))))
        g = build_graph(nodes)
        got = {(e.src, e.dst, e.donor_id) for e in g.edges if e.src != e.dst}
        assert got == _brute_force_edges(nodes)


def test_self_edges_only_on_compatible_pairs():
    nodes = [
        compatible_pair_node(0, BG.A, BG.A, self_weight=1.5),
        pair_node(1, BG.A, BG.B),
    ]
    g = build_graph(nodes)
    selfs = [e for e in g.edges if e.src == e.dst]
    assert [(e.src, e.weight) for e in selfs] == [(0, 1.5)]


def test_compatible_pair_requires_compatible_own_donor():
    with pytest.raises(InputError):
        compatible_pair_node(0, BG.O, BG.A, self_weight=1.0)


def test_unit_policy_examples():
    g = build_graph([dd_node(0, BG.O), wl_node(1, BG.A)], weight_policy_unit())
    assert g.edges[0].weight == 1.0


def test_plan_objective_counts_edges_under_unit_weights():
    nodes = [pair_node(0, BG.B, BG.A), pair_node(1, BG.A, BG.B), dd_node(2, BG.O),
             wl_node(3, BG.O)]
    plan = solve_packing(build_graph(nodes), 2)
    assert plan.objective == sum(len(ex.edges) for ex in plan.exchanges)


def test_doubled_weights_scale_objective_keep_argmax():
    nodes = [pair_node(0, BG.B, BG.A), pair_node(1, BG.A, BG.B)]
    unit_plan = solve_packing(build_graph(nodes), 2)
    doubled = WeightPolicy(name="x2", score=lambda db, rb, s, t: 2.0)
    twice_plan = solve_packing(build_graph(nodes, doubled), 2)
    assert twice_plan.objective == 2 * unit_plan.objective
    assert [ex.node_ids for ex in twice_plan.exchanges] == [
        ex.node_ids for ex in unit_plan.exchanges
    ]


def test_knockout_removes_edges_only():
    nodes = [pair_node(i, BG.A, BG.B) for i in range(0, 6, 2)] + [
        pair_node(i, BG.B, BG.A) for i in range(1, 6, 2)
    ]
    full = build_graph(nodes)
    rng = np.random.default_rng(0)
    knocked = build_graph(nodes, knockout_prob=0.5, rng=rng)
    assert set(knocked.edges) < set(full.edges)
    with pytest.raises(InputError):
        build_graph(nodes, knockout_prob=0.5)  # rng required


def test_snapshot_round_trip(tmp_path):
    nodes = [
        dd_node(0, BG.O),
        pair_node(1, BG.O, [(0, BG.A), (1, BG.B)], registry="PWL", arrival_round=4),
        compatible_pair_node(2, BG.B, BG.B, self_weight=2.0),
        wl_node(3, BG.AB),
    ]
    path = tmp_path / "snap.json"
    save_snapshot(nodes, str(path))
    loaded, policy = load_snapshot(str(path))
    assert loaded == sorted(nodes, key=lambda n: n.id)
    assert policy.name == "unit"


def test_snapshot_rejects_custom_policy(tmp_path):
    path = tmp_path / "snap.json"
    d = nodes_to_snapshot_dict([dd_node(0, BG.O)], weight_policy="custom")
    path.write_text(json.dumps(d))
    with pytest.raises(InputError):
        load_snapshot(str(path))


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(InputError):
        load_snapshot(str(path))


def test_graph_kind_degree_rules():
    rng = np.random.default_rng(11)
    from conftest import random_instance

    for _ in range(20):
        g = random_instance(rng)
        for e in g.edges:
            assert g.node(e.dst).kind != NodeKind.DD
            assert g.node(e.src).kind != NodeKind.WL
            if e.src == e.dst:
                assert g.node(e.src).kind == NodeKind.CN
