import json

import numpy as np
import pytest

from ddchain.enumeration import enumerate_chains, enumerate_cycles
from ddchain.ilp import (
    InvariantViolation,
    PairClass,
    build_compact,
    dump_lp,
    oracle_bruteforce,
    plan_to_dict,
    solve_bb,
    solve_class_model,
    solve_packing,
    validate_plan,
)
from ddchain.model import (
    BloodGroup,
    Edge,
    ExchangeGraph,
    InputError,
    WeightPolicy,
    build_graph,
    compatible_pair_node,
    dd_node,
    pair_node,
    wl_node,
)
from conftest import random_instance, registry_pool

BG = BloodGroup


def make_chain_instance():
    return build_graph(
        [dd_node(0, BG.O), pair_node(1, BG.O, BG.A), wl_node(2, BG.A), wl_node(3, BG.O)]
    )


def make_pure_three_cycle():
    nodes = [pair_node(0, BG.O, BG.A), pair_node(1, BG.A, BG.B), pair_node(2, BG.B, BG.O)]
    edges = [Edge(0, 1, 0, 1.0), Edge(1, 2, 0, 1.0), Edge(2, 0, 0, 1.0)]
    return ExchangeGraph(nodes, edges)


# --- compact formulation -----------------------------------------------------


def test_copy_count_formula():
    g = build_graph(
        [dd_node(0, BG.O), pair_node(1, BG.B, BG.A), pair_node(2, BG.A, BG.B),
         wl_node(3, BG.A)]
    )
    assert build_compact(g, 2).num_copies == 2
    g4 = build_graph([pair_node(i, BG.B, BG.A) for i in range(4)])
    assert build_compact(g4, 2).num_copies == 2


def test_empty_graph_formulation():
    g = build_graph([])
    f = build_compact(g, 2)
    assert f.num_variables == 0
    assert solve_bb(f).objective == 0.0


def test_build_compact_validates_input():
    g = build_graph([dd_node(0, BG.O)])
    with pytest.raises(InputError):
        build_compact(g, 0)
    g2 = ExchangeGraph([wl_node(0, BG.A)], [], capacity={0: 3})
    with pytest.raises(InputError):
        build_compact(g2, 2)


def test_self_edges_are_not_variables():
    g = build_graph([compatible_pair_node(0, BG.A, BG.A, self_weight=1.0)])
    f = build_compact(g, 2)
    assert f.num_variables == 0


def test_lp_dump(tmp_path):
    g = make_chain_instance()
    f = build_compact(g, 2, include_cn_constraint=True)
    path = tmp_path / "form.lp"
    dump_lp(f, str(path))
    text = path.read_text().splitlines()
    assert text[0].startswith("max:")
    names = {line.split(":")[0] for line in text[1:] if ":" in line}
    for stem in ("recv_cap", "give_cap", "copy_size", "give_once", "recv_once"):
        assert any(n.startswith(stem) for n in names)
    assert sum(1 for line in text if line.startswith("bin ")) == f.num_variables
    # every referenced variable is a declared one
    declared = {line.split()[1] for line in text if line.startswith("bin ")}
    for line in text[1:]:
        for tok in line.split():
            if tok.startswith("x_"):
                assert tok in declared


# --- worked solver examples --------------------------------------------------


def test_two_pair_swap():
    g = build_graph([pair_node(0, BG.B, BG.A), pair_node(1, BG.A, BG.B)])
    plan = solve_bb(build_compact(g, 2))
    assert plan.objective == 2.0
    assert [ex.kind for ex in plan.exchanges] == ["cycle"]


def test_chain_beats_direct_donation():
    g = make_chain_instance()
    for plan in (solve_bb(build_compact(g, 2)), solve_packing(g, 2)):
        assert plan.objective == 2.0
    assert oracle_bruteforce(g, 2) == 2.0


def test_no_edges_yields_empty_plan():
    g = build_graph([dd_node(0, BG.AB), wl_node(1, BG.O)])
    plan = solve_bb(build_compact(g, 2))
    assert plan.objective == 0.0 and plan.exchanges == ()
    assert plan.assignment == {0: None, 1: None}


def test_three_cycle_respects_bound():
    g = make_pure_three_cycle()
    assert solve_packing(g, 2).objective == 0.0
    assert solve_packing(g, 3).objective == 3.0
    assert solve_bb(build_compact(g, 2)).objective == 0.0
    assert solve_bb(build_compact(g, 3)).objective == 3.0


def test_oracle_examples():
    assert oracle_bruteforce(build_graph([]), 2) == 0.0
    g = build_graph([dd_node(0, BG.O), wl_node(1, BG.O)])
    assert oracle_bruteforce(g, 2) == 1.0


def test_oracle_guard():
    g = build_graph([pair_node(i, BG.A, BG.B) for i in range(15)])
    with pytest.raises(InputError):
        oracle_bruteforce(g, 2)


# --- cross-backend equivalence ----------------------------------------------


def test_three_way_equivalence_random():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        g = random_instance(rng)
        k = int(rng.integers(2, 4))
        o = oracle_bruteforce(g, k)
        pk = solve_packing(g, k)
        bb = solve_bb(build_compact(g, k))
        assert abs(o - pk.objective) < 1e-9
        assert abs(o - bb.objective) < 1e-9
        assert not validate_plan(g, pk, k)
        assert not validate_plan(g, bb, k)


def test_equivalence_with_cn_constraint():
    rng = np.random.default_rng(31)
    for _ in range(40):
        g = random_instance(rng)
        k = int(rng.integers(2, 4))
        o = oracle_bruteforce(g, k, include_cn_constraint=True)
        pk = solve_packing(g, k, include_cn_constraint=True)
        bb = solve_bb(build_compact(g, k, include_cn_constraint=True))
        assert abs(o - pk.objective) < 1e-9
        assert abs(o - bb.objective) < 1e-9
        assert not validate_plan(g, pk, k, include_cn_constraint=True)
        assert not validate_plan(g, bb, k, include_cn_constraint=True)


def test_equivalence_with_wl_terminus_rule():
    rng = np.random.default_rng(77)
    for _ in range(40):
        g = random_instance(rng)
        k = int(rng.integers(2, 4))
        pk = solve_packing(g, k, require_wl_terminus=True)
        bb = solve_bb(build_compact(g, k, require_wl_terminus=True))
        assert abs(pk.objective - bb.objective) < 1e-9
        assert not validate_plan(g, pk, k, require_wl_terminus=True)
        assert not validate_plan(g, bb, k, require_wl_terminus=True)


def test_packing_filter_composition_matches_compact_flag():
    # enumerate -> threshold filter -> pack gives the same optimum as the
    # compact backend with the constraint enabled
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = random_instance(rng)
        bb = solve_bb(build_compact(g, 2, include_cn_constraint=True))
        pk = solve_packing(g, 2, include_cn_constraint=True)
        assert abs(bb.objective - pk.objective) < 1e-9


# --- structural properties ----------------------------------------------------


def test_plan_structure_properties():
    rng = np.random.default_rng(15)
    for _ in range(25):
        g = random_instance(rng)
        k = int(rng.integers(2, 4))
        for plan in (solve_packing(g, k), solve_bb(build_compact(g, k))):
            used = [n for ex in plan.exchanges for n in ex.node_ids]
            assert len(used) == len(set(used))
            copies = [ex.copy_index for ex in plan.exchanges]
            assert copies == sorted(copies) and len(set(copies)) == len(copies)
            f = build_compact(g, k)
            assert len(plan.exchanges) <= f.num_copies
            for ex in plan.exchanges:
                assert len(ex.edges) <= k


def test_monotone_in_dd_and_k():
    rng = np.random.default_rng(8)
    for _ in range(15):
        g = random_instance(rng, unit_only=True)
        base = solve_packing(g, 2).objective
        more_k = solve_packing(g, 3).objective
        assert more_k >= base
        new_id = max((n.id for n in g.nodes), default=0) + 1
        g2 = build_graph(list(g.nodes) + [dd_node(new_id, BG.O)])
        assert solve_packing(g2, 2).objective >= base


def test_positive_rescaling_preserves_plan():
    nodes = [dd_node(0, BG.O), pair_node(1, BG.O, BG.A), wl_node(2, BG.A),
             pair_node(3, BG.B, BG.A), pair_node(4, BG.A, BG.B)]
    g1 = build_graph(nodes)
    scaled = WeightPolicy(name="x3", score=lambda db, rb, s, t: 3.0)
    g3 = build_graph(nodes, scaled)
    p1, p3 = solve_packing(g1, 2), solve_packing(g3, 2)
    assert abs(p3.objective - 3 * p1.objective) < 1e-9
    assert [ex.node_ids for ex in p3.exchanges] == [ex.node_ids for ex in p1.exchanges]


def test_determinism_same_input_same_plan():
    rng = np.random.default_rng(21)
    g = random_instance(rng)
    a = solve_bb(build_compact(g, 2))
    b = solve_bb(build_compact(g, 2))
    assert plan_to_dict(a) == plan_to_dict(b)
    c = solve_packing(g, 2)
    d = solve_packing(g, 2)
    assert plan_to_dict(c) == plan_to_dict(d)


def test_plan_json_round_trip_shape():
    g = make_chain_instance()
    d = plan_to_dict(solve_packing(g, 2))
    parsed = json.loads(json.dumps(d))
    assert parsed["objective"] == 2.0
    assert parsed["exchanges"][0]["kind"] in ("chain", "cycle")
    assert all(len(e) == 3 for e in parsed["exchanges"][0]["edge_list"])


# --- symmetric fast route ------------------------------------------------------


def test_symmetric_route_matches_generic():
    rng = np.random.default_rng(99)
    for _ in range(25):
        g = registry_pool(rng, int(rng.integers(5, 40)), int(rng.integers(0, 5)), 2)
        assert g.type_uniform
        fast = solve_packing(g, 2)
        generic = ExchangeGraph(g.nodes, g.edges, capacity=g.capacity)
        slow = solve_packing(generic, 2)  # type_uniform defaults to False here
        assert abs(fast.objective - slow.objective) < 1e-9
        assert not validate_plan(g, fast, 2)


def test_class_model_empty():
    sol = solve_class_model({}, [0, 0, 0, 0], [0, 0, 0, 0], 2)
    assert sol is not None and sol.value == 0.0
    assert solve_class_model({}, [0] * 4, [0] * 4, 4) is None


def test_capacitated_sink_accepts_multiple_chains():
    nodes = [
        dd_node(0, BG.O),
        dd_node(1, BG.O),
        pair_node(2, BG.O, BG.A),
        pair_node(3, BG.O, BG.A),
        wl_node(4, BG.A),
    ]
    g = build_graph(nodes)
    g.capacity[4] = 2
    plan = solve_packing(g, 2)
    assert plan.objective == 4.0  # two 2-edge chains share the sink
    assert not validate_plan(g, plan, 2)
