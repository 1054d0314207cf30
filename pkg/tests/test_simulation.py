import dataclasses
import json

import numpy as np
import pytest

from ddchain.ilp import solve_packing, validate_plan
from ddchain.model import (
    BloodGroup,
    ExchangeGraph,
    InputError,
    NodeKind,
    build_graph,
    dd_node,
    pair_node,
    wl_node,
)
from ddchain.simulation import (
    DEFAULT_POPULATION,
    POLICIES,
    RegistryState,
    ScenarioConfig,
    SimulationResult,
    generate_arrivals,
    run_round_cp,
    run_round_ddic,
    run_scenario,
    summarize,
)

BG = BloodGroup


def tiny_cfg(**kw):
    base = dict(rounds=8, replications=2, rng_seed=5)
    base.update(kw)
    return ScenarioConfig(**base)


# --- config -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(InputError):
        ScenarioConfig(kep_arrival=(5, 3)).validate()
    with pytest.raises(InputError):
        ScenarioConfig(dropout_prob=1.5).validate()
    with pytest.raises(InputError):
        ScenarioConfig(pair_bg_model={"O": 0.5, "A": 0.5, "B": 0.2, "AB": -0.2}).validate()
    cfg = ScenarioConfig()
    cfg.validate()
    assert abs(sum(cfg.pair_bg_model.values()) - 1.0) < 1e-9


def test_config_round_trip():
    cfg = tiny_cfg(pwl_fraction=0.25, dropout_prob=0.1)
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(InputError):
        ScenarioConfig.from_dict({"bogus_field": 1})


# --- arrivals ----------------------------------------------------------------


def test_arrival_counts_within_ranges():
    cfg = tiny_cfg(kep_arrival=(10, 15), dd_arrival=(1, 5))
    rng = np.random.default_rng(0)
    for t in range(cfg.rounds):
        pairs, dds = generate_arrivals(cfg, t, rng)
        assert 10 <= len(pairs) <= 15
        assert 1 <= len(dds) <= 5
        for p in pairs:
            assert p.arrival_round == t
            donor_bg = p.donors[0][1]
            from ddchain.model import abo_compatible

            assert not abo_compatible(donor_bg, p.recipient_bg)


def test_arrivals_deterministic_and_pwl():
    cfg = tiny_cfg(pwl_fraction=0.0)
    a1 = generate_arrivals(cfg, 0, np.random.default_rng(9))
    a2 = generate_arrivals(cfg, 0, np.random.default_rng(9))
    assert a1 == a2
    assert all(not p.is_pwl for p in a1[0])
    cfg_pwl = tiny_cfg(pwl_fraction=1.0)
    pairs, _ = generate_arrivals(cfg_pwl, 0, np.random.default_rng(9))
    assert all(p.is_pwl for p in pairs)


def test_arrivals_round_guard():
    cfg = tiny_cfg()
    with pytest.raises(InputError):
        generate_arrivals(cfg, cfg.rounds, np.random.default_rng(0))


# --- single rounds ------------------------------------------------------------


def test_cp_round_credits_both_kidneys():
    cfg = tiny_cfg()
    state = RegistryState(cfg)
    run_round_cp(state, ([], [dd_node(1, BG.O)]), 2, np.random.default_rng(0))
    assert state.wl_transplants == 2
    assert state.matched_series == [0]


def test_cp_round_matches_mutual_pairs_with_zero_wait():
    cfg = tiny_cfg()
    state = RegistryState(cfg)
    pairs = [pair_node(0, BG.B, BG.A, arrival_round=0), pair_node(1, BG.A, BG.B, arrival_round=0)]
    run_round_cp(state, (pairs, []), 2, np.random.default_rng(0))
    assert state.matched_series == [2]
    assert state.wait_match_sum.sum() == 0.0


def test_ddic_round_beats_cp_on_chain_instance():
    cfg = tiny_cfg()
    pairs = [pair_node(0, BG.O, BG.A, arrival_round=0)]
    dds = [dd_node(9, BG.O)]
    ddic = RegistryState(cfg)
    run_round_ddic(ddic, (pairs, dds), 2, np.random.default_rng(0))
    cp = RegistryState(cfg)
    run_round_cp(cp, (pairs, dds), 2, np.random.default_rng(0))
    assert ddic.matched_bg.sum() + ddic.wl_transplants == 3
    assert cp.matched_bg.sum() + cp.wl_transplants == 2


def test_ddic_falls_back_to_direct_donation():
    cfg = tiny_cfg()
    state = RegistryState(cfg)
    # AB donor reaches no pair and no pair exists: both kidneys end up WL-bound
    run_round_ddic(state, ([], [dd_node(1, BG.AB)]), 2, np.random.default_rng(0))
    assert state.wl_transplants == 2
    assert state.matched_series == [0]


def test_no_dropouts_when_probability_zero():
    cfg = tiny_cfg(dropout_prob=0.0)
    res = run_scenario(cfg)
    assert res.dropouts.sum() == 0


def test_no_donors_policies_coincide():
    cfg = tiny_cfg(dd_arrival=(0, 0), dropout_prob=0.1)
    res = run_scenario(cfg)
    assert np.array_equal(res.matched[0], res.matched[1])
    assert np.array_equal(res.dropouts[0], res.dropouts[1])
    assert res.wl_transplants.sum() == 0


# --- scenario-level behaviour ---------------------------------------------------


def test_series_lengths_and_reproducibility():
    cfg = tiny_cfg(replications=1)
    res1 = run_scenario(cfg)
    res2 = run_scenario(cfg)
    assert res1.matched.shape == (2, 1, cfg.rounds)
    for f in dataclasses.fields(SimulationResult):
        if f.name == "config":
            continue
        assert np.array_equal(getattr(res1, f.name), getattr(res2, f.name))


def test_conservation_per_group_per_replication():
    cfg = tiny_cfg(dropout_prob=0.2, pwl_fraction=0.3)
    res = run_scenario(cfg)
    for p in range(2):
        total = res.matched_bg[p] + res.dropped_bg[p] + res.active_end_bg[p]
        assert np.array_equal(total, res.arrivals_bg)


def test_cumulative_match_dominance_without_dropouts():
    cfg = ScenarioConfig(rounds=14, replications=3, dropout_prob=0.0, rng_seed=11)
    res = run_scenario(cfg)
    cum_cp = np.cumsum(res.matched[0], axis=1)
    cum_dd = np.cumsum(res.matched[1], axis=1)
    assert (cum_dd >= cum_cp).all()


def test_waiting_time_bounds_and_dropout_monotonicity():
    cfg = tiny_cfg(dropout_prob=0.3)
    res = run_scenario(cfg)
    for p in POLICIES:
        for bg in BG:
            assert 0.0 <= res.mean_wait(p, bg) <= cfg.rounds
            assert 0.0 <= res.mean_wait(p, bg, censored=False) <= cfg.rounds
        assert (res.dropouts[POLICIES.index(p)] >= 0).all()


def test_per_dd_accounting():
    # every donor yields exactly 2 transplant credits under CP and >= 2 under DDIC
    cfg = ScenarioConfig(rounds=10, replications=2, dd_arrival=(2, 4), rng_seed=3)
    res = run_scenario(cfg)
    # count donors from the arrival stream by regenerating it
    for rep in range(cfg.replications):
        ss = np.random.SeedSequence(cfg.rng_seed ^ rep)
        seed_pairs, seed_dd, _ = ss.spawn(3)
        rp, rd = np.random.default_rng(seed_pairs), np.random.default_rng(seed_dd)
        n_dd = sum(
            len(generate_arrivals(cfg, t, rp, dd_rng=rd)[1]) for t in range(cfg.rounds)
        )
        assert res.wl_transplants[0, rep] == 2 * n_dd
        assert res.wl_transplants[1, rep] >= n_dd
        total_ddic = res.matched[1, rep].sum() + res.wl_transplants[1, rep]
        assert total_ddic >= 2 * n_dd


def test_wl_gets_two_per_donor_under_wl_terminus_rule():
    cfg = ScenarioConfig(rounds=10, replications=2, dd_arrival=(2, 4), rng_seed=3,
                         require_wl_terminus=True)
    res = run_scenario(cfg)
    cfg_plain = ScenarioConfig(rounds=10, replications=2, dd_arrival=(2, 4), rng_seed=3)
    ref = run_scenario(cfg_plain)
    # chains may only end at the wait-list, so both kidneys always reach it
    assert np.array_equal(res.wl_transplants[1], ref.wl_transplants[0])


def test_round_solver_matches_packing_solver():
    """The interchangeable-class round solve equals the generic packing solve."""
    rng = np.random.default_rng(123)
    cfg = tiny_cfg()
    for trial in range(20):
        state = RegistryState(cfg)
        pairs, dds = generate_arrivals(cfg, 0, rng)
        state.add_arrivals(pairs)
        from ddchain.simulation import _solve_round

        outcome = _solve_round(state, list(dds), 2, rng)
        # rebuild the same instance as an explicit graph with sink capacity
        nodes = list(pairs) + list(dds)
        sink_ids = []
        for b in range(4):
            sink_ids.append(-(b + 1))
            nodes.append(wl_node(-(b + 1), BG(b)))
        g = build_graph(nodes)
        for sid in sink_ids:
            g.capacity[sid] = len(dds)
        g.type_uniform = False  # force the generic route
        plan = solve_packing(g, 2)
        assert abs(outcome.objective - plan.objective) < 1e-9
        assert not validate_plan(g, plan, 2)


def test_summarize_shapes(tmp_path):
    cfg = tiny_cfg(dropout_prob=0.1)
    tables = summarize(run_scenario(cfg))
    assert len(tables.round_rows) == cfg.rounds * 2
    assert len(tables.waiting_rows) == 8
    assert len(tables.dropout_rows) == 8
    tables.write(str(tmp_path))
    rounds = (tmp_path / "rounds.csv").read_text().splitlines()
    assert rounds[0] == "round,policy,matched,dropouts"
    assert len(rounds) == 1 + cfg.rounds * 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["policies"]) == {"cp", "ddic"}
    assert summary["config"]["rounds"] == cfg.rounds


def test_knockout_config_runs_generic_route():
    cfg = ScenarioConfig(rounds=3, replications=1, kep_arrival=(3, 5),
                         dd_arrival=(1, 2), knockout_prob=0.4, rng_seed=2)
    res = run_scenario(cfg)  # exercises the explicit-graph path
    assert res.matched.shape == (2, 1, 3)
