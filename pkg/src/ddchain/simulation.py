"""Monthly Monte Carlo comparison of chain-seeded allocation vs. the current process.

Each scenario runs two policies on identical arrival streams (common random
numbers).  Under the current process (CP) both kidneys of every deceased
donor go straight to the wait-list and the exchange pool clears with cycles
only.  Under deceased-donor-initiated chains (DDIC) the first kidney goes to
the wait-list and the second seeds a chain in a combined cycle-and-chain
solve; donors the optimizer leaves unused fall back to direct wait-list
donation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ilp import PairClass, solve_class_model, solve_packing
from .model import (
    BloodGroup,
    ExchangeGraph,
    InputError,
    Node,
    NodeKind,
    abo_compatible,
    build_graph,
    dd_node,
    pair_node,
    weight_policy_unit,
    wl_node,
)

__all__ = [
    "DEFAULT_POPULATION",
    "POLICIES",
    "ScenarioConfig",
    "RegistryState",
    "SimulationResult",
    "ReportTables",
    "generate_arrivals",
    "run_round_cp",
    "run_round_ddic",
    "run_scenario",
    "summarize",
]

# Implementer-supplied approximation of the Indian population ABO mix; the
# registry's own pair-level distribution is unpublished, so this is plain
# configuration, not ground truth.
DEFAULT_POPULATION: Dict[str, float] = {"O": 0.37, "A": 0.22, "B": 0.32, "AB": 0.09}

POLICIES = ("cp", "ddic")
CP, DDIC = POLICIES

_GROUP_NAMES = [str(b) for b in BloodGroup]


def _dist_to_array(dist: Mapping[str, float]) -> np.ndarray:
    try:
        arr = np.array([float(dist[str(b)]) for b in BloodGroup])
    except KeyError as exc:
        raise InputError(f"distribution missing blood group {exc}") from exc
    if abs(arr.sum() - 1.0) > 1e-9:
        raise InputError(f"distribution sums to {arr.sum()}, expected 1")
    if (arr < 0).any():
        raise InputError("negative probability in distribution")
    return arr


@dataclass
class ScenarioConfig:
    """Parameters of one simulated scenario.

    Arrival ranges are inclusive integer bounds per month.  `pair_bg_model`
    is the population ABO distribution from which donor and recipient groups
    are drawn i.i.d., rejecting ABO-compatible combinations (exchange pools
    hold incompatible pairs).  `pwl_fraction` tags arriving pairs as
    dual-registered.  `knockout_prob` optionally removes edges i.i.d. to
    mimic tissue-type incompatibility (0 = ABO only, the reported setting).
    """

    kep_arrival: Tuple[int, int] = (10, 15)
    dd_arrival: Tuple[int, int] = (1, 5)
    dropout_prob: float = 0.0
    rounds: int = 60
    replications: int = 30
    k: int = 2
    pwl_fraction: float = 0.0
    pair_bg_model: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_POPULATION)
    )
    dd_bg_distribution: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_POPULATION)
    )
    rng_seed: int = 0
    knockout_prob: float = 0.0
    require_wl_terminus: bool = False

    def validate(self) -> None:
        for name, (lo, hi) in (
            ("kep_arrival", self.kep_arrival),
            ("dd_arrival", self.dd_arrival),
        ):
            if lo < 0 or hi < lo:
                raise InputError(f"{name} range ({lo},{hi}) is empty or negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise InputError("dropout_prob must lie in [0,1]")
        if not 0.0 <= self.pwl_fraction <= 1.0:
            raise InputError("pwl_fraction must lie in [0,1]")
        if not 0.0 <= self.knockout_prob <= 1.0:
            raise InputError("knockout_prob must lie in [0,1]")
        if self.rounds <= 0 or self.replications <= 0:
            raise InputError("rounds and replications must be positive")
        if self.k < 1:
            raise InputError("k must be >= 1")
        self.pair_probs()
        self.dd_probs()

    def pair_probs(self) -> np.ndarray:
        return _dist_to_array(self.pair_bg_model)

    def dd_probs(self) -> np.ndarray:
        return _dist_to_array(self.dd_bg_distribution)

    def to_dict(self) -> dict:
        return {
            "kep_arrival": list(self.kep_arrival),
            "dd_arrival": list(self.dd_arrival),
            "dropout_prob": self.dropout_prob,
            "rounds": self.rounds,
            "replications": self.replications,
            "k": self.k,
            "pwl_fraction": self.pwl_fraction,
            "pair_bg_model": dict(self.pair_bg_model),
            "dd_bg_distribution": dict(self.dd_bg_distribution),
            "rng_seed": self.rng_seed,
            "knockout_prob": self.knockout_prob,
            "require_wl_terminus": self.require_wl_terminus,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        known = {
            "kep_arrival": lambda v: (int(v[0]), int(v[1])),
            "dd_arrival": lambda v: (int(v[0]), int(v[1])),
            "dropout_prob": float,
            "rounds": int,
            "replications": int,
            "k": int,
            "pwl_fraction": float,
            "pair_bg_model": dict,
            "dd_bg_distribution": dict,
            "rng_seed": int,
            "knockout_prob": float,
            "require_wl_terminus": bool,
        }
        kwargs = {}
        for key, conv in known.items():
            if key in d:
                kwargs[key] = conv(d[key])
        unknown = set(d) - set(known)
        if unknown:
            raise InputError(f"unknown scenario fields: {sorted(unknown)}")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def generate_arrivals(
    cfg: ScenarioConfig,
    round_index: int,
    rng: np.random.Generator,
    dd_rng: Optional[np.random.Generator] = None,
) -> Tuple[List[Node], List[Node]]:
    """One month of stochastic arrivals.

    Pair counts are uniform integers over the inclusive `kep_arrival` range;
    recipient/donor groups are drawn i.i.d. from the population model with
    ABO-compatible combinations rejected.  Deceased donors draw from
    `dd_arrival` and `dd_bg_distribution` (on `dd_rng` when given, so the
    pair stream stays identical across donor-rate scenarios).
    """
    if not 0 <= round_index < cfg.rounds:
        raise InputError(f"round {round_index} outside 0..{cfg.rounds - 1}")
    pair_p = cfg.pair_probs()
    dd_p = cfg.dd_probs()
    dd_rng = dd_rng if dd_rng is not None else rng

    n_pairs = int(rng.integers(cfg.kep_arrival[0], cfg.kep_arrival[1] + 1))
    pairs: List[Node] = []
    base = round_index * 1_000_000
    for i in range(n_pairs):
        while True:
            recip = int(rng.choice(4, p=pair_p))
            donor = int(rng.choice(4, p=pair_p))
            if not abo_compatible(BloodGroup(donor), BloodGroup(recip)):
                break
        registry = "PWL" if rng.random() < cfg.pwl_fraction else "P"
        pairs.append(
            pair_node(
                base + i,
                BloodGroup(recip),
                BloodGroup(donor),
                registry=registry,
                arrival_round=round_index,
            )
        )
    n_dd = int(dd_rng.integers(cfg.dd_arrival[0], cfg.dd_arrival[1] + 1))
    dds = [
        dd_node(base + 500_000 + j, BloodGroup(int(dd_rng.choice(4, p=dd_p))))
        for j in range(n_dd)
    ]
    return pairs, dds


@dataclass
class RoundOutcome:
    matched_ids: List[int]
    wl_edges: int
    dd_used: int
    objective: float


class RegistryState:
    """Mutable per-policy ledger: active pairs plus cumulative statistics."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.active: Dict[int, Node] = {}
        self.round_index = 0
        self.wl_transplants = 0
        self.arrivals_bg = np.zeros(4, dtype=np.int64)
        self.matched_bg = np.zeros(4, dtype=np.int64)
        self.dropped_bg = np.zeros(4, dtype=np.int64)
        self.active_end_bg = np.zeros(4, dtype=np.int64)
        self.wait_match_sum = np.zeros(4, dtype=np.float64)
        self.wait_observed_sum = np.zeros(4, dtype=np.float64)
        self.matched_series: List[int] = []
        self.dropout_series: List[int] = []

    def add_arrivals(self, pairs: Sequence[Node]) -> None:
        for p in pairs:
            self.active[p.id] = p
            self.arrivals_bg[int(p.recipient_bg)] += 1

    def apply_matches(self, matched_ids: Sequence[int]) -> None:
        for nid in matched_ids:
            node = self.active.pop(nid)
            wait = self.round_index - node.arrival_round
            bg = int(node.recipient_bg)
            self.matched_bg[bg] += 1
            self.wait_match_sum[bg] += wait
            self.wait_observed_sum[bg] += wait
        self.matched_series.append(len(matched_ids))

    def apply_dropouts(self, rng: np.random.Generator) -> None:
        dp = self.cfg.dropout_prob
        if dp <= 0.0 or not self.active:
            self.dropout_series.append(0)
            return
        ids = sorted(self.active)
        draws = rng.random(len(ids))
        dropped = 0
        for nid, u in zip(ids, draws):
            if u < dp:
                node = self.active.pop(nid)
                bg = int(node.recipient_bg)
                self.dropped_bg[bg] += 1
                self.wait_observed_sum[bg] += self.round_index - node.arrival_round
                dropped += 1
        self.dropout_series.append(dropped)

    def finalize(self) -> None:
        """Credit survivors with their censored time in the registry."""
        horizon = self.cfg.rounds
        for node in self.active.values():
            bg = int(node.recipient_bg)
            self.active_end_bg[bg] += 1
            self.wait_observed_sum[bg] += horizon - node.arrival_round


def _solve_round(
    state: RegistryState, dds: Sequence[Node], k: int, rng: np.random.Generator
) -> RoundOutcome:
    """Clear one month optimally over the active pool (plus donors, for DDIC).

    ABO-only unit-weight months reduce exactly to the interchangeable-class
    model; anything else materializes the graph and runs the packing solver.
    """
    cfg = state.cfg
    n_dd = len(dds)
    if not state.active and n_dd == 0:
        return RoundOutcome([], 0, 0, 0.0)
    uniform = cfg.knockout_prob == 0.0 and k <= 2
    if uniform:
        buckets: Dict[PairClass, List[int]] = {}
        for nid in sorted(state.active):
            node = state.active[nid]
            key = PairClass(int(node.recipient_bg), int(node.donors[0][1]), node.is_pwl)
            buckets.setdefault(key, []).append(nid)
        dd_ids: Dict[int, List[int]] = {b: [] for b in range(4)}
        for d in sorted(dds, key=lambda n: n.id):
            dd_ids[int(d.donor_bg)].append(d.id)
        counts = {c: len(v) for c, v in buckets.items()}
        dd_counts = [len(dd_ids[b]) for b in range(4)]
        wl_caps = [n_dd] * 4 if n_dd else [0] * 4
        sol = solve_class_model(counts, dd_counts, wl_caps, k, cfg.require_wl_terminus)
        if sol is not None:
            matched: List[int] = []
            for (c1, c2), cnt in sorted(sol.cycles.items()):
                need = {c1: cnt, c2: cnt} if c1 != c2 else {c1: 2 * cnt}
                for c, m in need.items():
                    matched.extend(buckets[c][:m])
                    del buckets[c][:m]
            chain_like = [
                (sol.chains, True, False),
                (sol.pwl_two, False, True),
                (sol.pwl_one, False, False),
            ]
            wl_edges = 0
            dd_used = 0
            for group, ends_wl, two_pairs in chain_like:
                for key, cnt in sorted(group.items()):
                    gbg = key[0]
                    del dd_ids[gbg][:cnt]
                    dd_used += cnt
                    if ends_wl:
                        wl_edges += cnt
                    pcs = [key[1], key[2]] if two_pairs else [key[1]]
                    for c in pcs:
                        if isinstance(c, PairClass):
                            matched.extend(buckets[c][:cnt])
                            del buckets[c][:cnt]
            for (gbg, _t), cnt in sorted(sol.directs.items()):
                del dd_ids[gbg][:cnt]
                dd_used += cnt
                wl_edges += cnt
            return RoundOutcome(matched, wl_edges, dd_used, sol.value)

    nodes: List[Node] = [state.active[nid] for nid in sorted(state.active)]
    nodes.extend(dds)
    sink_ids = []
    if n_dd:
        for b in range(4):
            sink_ids.append(-(b + 1))
            nodes.append(wl_node(-(b + 1), BloodGroup(b)))
    g = build_graph(
        nodes,
        weight_policy_unit(),
        knockout_prob=cfg.knockout_prob,
        rng=rng if cfg.knockout_prob else None,
    )
    if sink_ids:
        for sid in sink_ids:
            g.capacity[sid] = n_dd
    plan = solve_packing(g, k, require_wl_terminus=cfg.require_wl_terminus)
    matched = []
    wl_edges = 0
    dd_seen = set()
    for ex in plan.exchanges:
        for nid in ex.node_ids:
            node = g.node(nid)
            if node.kind in (NodeKind.PAIR, NodeKind.CN):
                matched.append(nid)
            elif node.kind == NodeKind.DD:
                dd_seen.add(nid)
        wl_edges += sum(1 for e in ex.edges if g.node(e.dst).kind == NodeKind.WL)
    return RoundOutcome(matched, wl_edges, len(dd_seen), plan.objective)


def run_round_cp(
    state: RegistryState,
    arrivals: Tuple[Sequence[Node], Sequence[Node]],
    k: int,
    rng: np.random.Generator,
) -> RegistryState:
    """Current process: both donor kidneys to the wait-list, cycles-only pool."""
    pairs, dds = arrivals
    state.add_arrivals(pairs)
    state.wl_transplants += 2 * len(dds)
    outcome = _solve_round(state, [], k, rng)
    state.apply_matches(outcome.matched_ids)
    state.apply_dropouts(rng)
    state.round_index += 1
    return state


def run_round_ddic(
    state: RegistryState,
    arrivals: Tuple[Sequence[Node], Sequence[Node]],
    k: int,
    rng: np.random.Generator,
) -> RegistryState:
    """Chain-seeded process: one kidney to the wait-list, one into the pool.

    Chains reaching the wait-list and unused second kidneys both credit the
    wait-list counter, so every donor always yields at least two transplants.
    """
    pairs, dds = arrivals
    state.add_arrivals(pairs)
    state.wl_transplants += len(dds)
    outcome = _solve_round(state, list(dds), k, rng)
    state.apply_matches(outcome.matched_ids)
    state.wl_transplants += outcome.wl_edges + (len(dds) - outcome.dd_used)
    state.apply_dropouts(rng)
    state.round_index += 1
    return state


@dataclass
class SimulationResult:
    """Raw per-replication series and aggregates for one scenario."""

    config: ScenarioConfig
    matched: np.ndarray  # int64[policy, rep, round]
    dropouts: np.ndarray  # int64[policy, rep, round]
    wl_transplants: np.ndarray  # int64[policy, rep]
    arrivals_bg: np.ndarray  # int64[rep, 4]
    matched_bg: np.ndarray  # int64[policy, rep, 4]
    dropped_bg: np.ndarray  # int64[policy, rep, 4]
    active_end_bg: np.ndarray  # int64[policy, rep, 4]
    wait_match_sum: np.ndarray  # float64[policy, rep, 4]
    wait_observed_sum: np.ndarray  # float64[policy, rep, 4]

    def _pi(self, policy: str) -> int:
        return POLICIES.index(policy)

    def mean_series(self, policy: str) -> Tuple[np.ndarray, np.ndarray]:
        p = self._pi(policy)
        return self.matched[p].mean(axis=0), self.dropouts[p].mean(axis=0)

    def transplants_by_rep(self, policy: str) -> np.ndarray:
        p = self._pi(policy)
        return self.matched[p].sum(axis=1) + self.wl_transplants[p]

    def pair_matches_by_rep(self, policy: str) -> np.ndarray:
        return self.matched[self._pi(policy)].sum(axis=1)

    def mean_wait(self, policy: str, bg: BloodGroup, censored: bool = True) -> float:
        """Pooled mean months in the registry for recipients of one group.

        Censored: matched pairs contribute time to match, dropouts time to
        dropout, survivors time to horizon.  Uncensored: matched pairs only
        (0.0 when none matched).
        """
        p = self._pi(policy)
        b = int(bg)
        if censored:
            denom = self.arrivals_bg[:, b].sum()
            num = self.wait_observed_sum[p, :, b].sum()
        else:
            denom = self.matched_bg[p, :, b].sum()
            num = self.wait_match_sum[p, :, b].sum()
        return float(num / denom) if denom else 0.0

    def total_dropouts(self, policy: str, bg: BloodGroup) -> float:
        return float(self.dropped_bg[self._pi(policy), :, int(bg)].mean())

    def match_rate(self, policy: str, bg: BloodGroup) -> float:
        denom = self.arrivals_bg[:, int(bg)].sum()
        num = self.matched_bg[self._pi(policy), :, int(bg)].sum()
        return float(num / denom) if denom else 0.0


def run_scenario(cfg: ScenarioConfig) -> SimulationResult:
    """Run both policies over identical arrival streams, all replications.

    Replication i seeds its streams from ``rng_seed ^ i``; pair arrivals,
    donor arrivals, and per-policy randomness (dropouts, knockouts) are
    separate substreams, and both policies receive identically seeded copies
    of theirs, so the comparison is paired.
    """
    cfg.validate()
    reps, rounds = cfg.replications, cfg.rounds
    matched = np.zeros((2, reps, rounds), dtype=np.int64)
    dropouts = np.zeros((2, reps, rounds), dtype=np.int64)
    wl = np.zeros((2, reps), dtype=np.int64)
    arrivals_bg = np.zeros((reps, 4), dtype=np.int64)
    matched_bg = np.zeros((2, reps, 4), dtype=np.int64)
    dropped_bg = np.zeros((2, reps, 4), dtype=np.int64)
    active_end = np.zeros((2, reps, 4), dtype=np.int64)
    wait_match = np.zeros((2, reps, 4), dtype=np.float64)
    wait_obs = np.zeros((2, reps, 4), dtype=np.float64)

    runners = {CP: run_round_cp, DDIC: run_round_ddic}
    for rep in range(reps):
        ss = np.random.SeedSequence(cfg.rng_seed ^ rep)
        seed_pairs, seed_dd, seed_policy = ss.spawn(3)
        rng_pairs = np.random.default_rng(seed_pairs)
        rng_dd = np.random.default_rng(seed_dd)
        stream = [
            generate_arrivals(cfg, t, rng_pairs, dd_rng=rng_dd) for t in range(rounds)
        ]
        for p, policy in enumerate(POLICIES):
            rng_policy = np.random.default_rng(seed_policy)
            state = RegistryState(cfg)
            step = runners[policy]
            for t in range(rounds):
                step(state, stream[t], cfg.k, rng_policy)
            state.finalize()
            matched[p, rep] = state.matched_series
            dropouts[p, rep] = state.dropout_series
            wl[p, rep] = state.wl_transplants
            matched_bg[p, rep] = state.matched_bg
            dropped_bg[p, rep] = state.dropped_bg
            active_end[p, rep] = state.active_end_bg
            wait_match[p, rep] = state.wait_match_sum
            wait_obs[p, rep] = state.wait_observed_sum
            if p == 0:
                arrivals_bg[rep] = state.arrivals_bg
    return SimulationResult(
        config=cfg,
        matched=matched,
        dropouts=dropouts,
        wl_transplants=wl,
        arrivals_bg=arrivals_bg,
        matched_bg=matched_bg,
        dropped_bg=dropped_bg,
        active_end_bg=active_end,
        wait_match_sum=wait_match,
        wait_observed_sum=wait_obs,
    )


@dataclass
class ReportTables:
    """Flat, plot-ready rows mirroring the published comparison tables."""

    round_rows: List[Tuple[int, str, float, float]]
    waiting_rows: List[Tuple[str, str, float]]
    dropout_rows: List[Tuple[str, str, float]]
    summary: dict

    def write(self, out_dir: str) -> None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "rounds.csv"), "w") as fh:
            fh.write("round,policy,matched,dropouts\n")
            for r, pol, m, d in self.round_rows:
                fh.write(f"{r},{pol},{m:.6f},{d:.6f}\n")
        with open(os.path.join(out_dir, "waiting.csv"), "w") as fh:
            fh.write("blood_group,policy,mean_wait_months\n")
            for bg, pol, wv in self.waiting_rows:
                fh.write(f"{bg},{pol},{wv:.6f}\n")
        with open(os.path.join(out_dir, "dropouts.csv"), "w") as fh:
            fh.write("blood_group,policy,total\n")
            for bg, pol, dv in self.dropout_rows:
                fh.write(f"{bg},{pol},{dv:.6f}\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.summary, fh, indent=1, sort_keys=True)
            fh.write("\n")


def summarize(result: SimulationResult) -> ReportTables:
    """Emit waiting-time, dropout, and per-round tables for both policies.

    The waiting table reports the censored registry time (matched pairs to
    match, dropouts to dropout, survivors to horizon): the only definition
    under which groups the baseline never matches have finite entries.  The
    matched-only means and match rates sit alongside in the JSON summary.
    """
    round_rows = []
    for policy in POLICIES:
        m, d = result.mean_series(policy)
        for t in range(result.config.rounds):
            round_rows.append((t, policy, float(m[t]), float(d[t])))
    round_rows.sort(key=lambda r: (r[0], r[1]))

    waiting_rows = []
    dropout_rows = []
    per_group: dict = {}
    for bg in BloodGroup:
        for policy in POLICIES:
            waiting_rows.append(
                (str(bg), policy, result.mean_wait(policy, bg, censored=True))
            )
            dropout_rows.append((str(bg), policy, result.total_dropouts(policy, bg)))
            per_group.setdefault(str(bg), {})[policy] = {
                "mean_wait_censored": result.mean_wait(policy, bg, censored=True),
                "mean_wait_matched": result.mean_wait(policy, bg, censored=False),
                "match_rate": result.match_rate(policy, bg),
                "mean_total_dropouts": result.total_dropouts(policy, bg),
                "mean_matched": float(
                    result.matched_bg[POLICIES.index(policy), :, int(bg)].mean()
                ),
            }
        per_group[str(bg)]["mean_arrivals"] = float(result.arrivals_bg[:, int(bg)].mean())

    summary = {
        "config": result.config.to_dict(),
        "replications": result.config.replications,
        "policies": {
            policy: {
                "mean_total_transplants": float(
                    result.transplants_by_rep(policy).mean()
                ),
                "mean_pair_matches": float(result.pair_matches_by_rep(policy).mean()),
                "mean_wl_transplants": float(
                    result.wl_transplants[POLICIES.index(policy)].mean()
                ),
                "mean_total_dropouts": float(
                    result.dropouts[POLICIES.index(policy)].sum(axis=1).mean()
                ),
            }
            for policy in POLICIES
        },
        "blood_groups": per_group,
    }
    return ReportTables(
        round_rows=round_rows,
        waiting_rows=waiting_rows,
        dropout_rows=dropout_rows,
        summary=summary,
    )
