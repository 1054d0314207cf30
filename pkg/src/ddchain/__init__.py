"""Kidney exchange optimization with deceased-donor-initiated chains.

An exact solver for the replicated-copy cycle-and-chain program, an
enumeration-based packing backend cross-checking it, and a long-horizon
Monte Carlo comparison of chain-seeded allocation against the current
direct-to-waitlist process.
"""
from .model import (
    BloodGroup,
    Edge,
    ExchangeGraph,
    InputError,
    Node,
    NodeKind,
    WeightPolicy,
    abo_compatible,
    build_graph,
    compatible_pair_node,
    dd_node,
    load_snapshot,
    pair_node,
    save_snapshot,
    weight_policy_unit,
    wl_node,
)
from .enumeration import (
    Exchange,
    enumerate_chains,
    enumerate_cycles,
    filter_compatible_pair_exchanges,
)
from .ilp import (
    CompactFormulation,
    InvariantViolation,
    MatchPlan,
    build_compact,
    dump_lp,
    oracle_bruteforce,
    plan_to_dict,
    solve_bb,
    solve_packing,
    validate_plan,
)
from .simulation import (
    ScenarioConfig,
    SimulationResult,
    generate_arrivals,
    run_round_cp,
    run_round_ddic,
    run_scenario,
    summarize,
)

__version__ = "0.1.0"
