"""Command-line front end: pool generation, one-shot solves, scenario batches, reports.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .enumeration import Exchange
from .ilp import (
    InvariantViolation,
    build_compact,
    dump_lp,
    plan_to_dict,
    solve_bb,
    solve_packing,
    validate_plan,
)
from .model import (
    BloodGroup,
    InputError,
    Node,
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
from .simulation import (
    DEFAULT_POPULATION,
    POLICIES,
    ScenarioConfig,
    run_scenario,
    summarize,
)

DEFAULT_GRID = {
    "kep_arrival": [[10, 15], [15, 20], [20, 25]],
    "dd_arrival": [[1, 5], [5, 10], [10, 15]],
    "dropout_prob": [0.0, 0.1, 0.3],
}


def _die(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_manifest(out_dir: str, command: str, config_path: Optional[str], seed: int,
                    started: float, status: str, extra: Optional[dict] = None) -> None:
    manifest = {
        "command": command,
        "config": config_path,
        "seed": seed,
        "out_dir": os.path.abspath(out_dir),
        "tool_version": __version__,
        "duration_seconds": round(time.time() - started, 3),
        "status": status,
    }
    if extra:
        manifest.update(extra)
    _atomic_write(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, indent=1, sort_keys=True) + "\n",
    )


# ---------------------------------------------------------------------------
# gen-pool
# ---------------------------------------------------------------------------


def _sample_incompatible(rng: np.random.Generator, probs: np.ndarray):
    while True:
        recip = int(rng.choice(4, p=probs))
        donor = int(rng.choice(4, p=probs))
        if not abo_compatible(BloodGroup(donor), BloodGroup(recip)):
            return recip, donor


def cmd_gen_pool(args: argparse.Namespace) -> int:
    cfg = _read_json(args.config)
    known = {
        "pairs", "dds", "wl_per_group", "cn_pairs", "pwl_fraction",
        "multi_donor_fraction", "population", "dd_distribution", "seed",
    }
    unknown = set(cfg) - known
    if unknown:
        raise InputError(f"unknown pool config fields: {sorted(unknown)}")
    n_pairs = int(cfg.get("pairs", 0))
    n_dds = int(cfg.get("dds", 0))
    wl_per_group = int(cfg.get("wl_per_group", 0))
    n_cn = int(cfg.get("cn_pairs", 0))
    pwl_fraction = float(cfg.get("pwl_fraction", 0.0))
    multi_frac = float(cfg.get("multi_donor_fraction", 0.0))
    if min(n_pairs, n_dds, wl_per_group, n_cn) < 0:
        raise InputError("counts must be non-negative")
    if not 0 <= pwl_fraction <= 1 or not 0 <= multi_frac <= 1:
        raise InputError("fractions must lie in [0,1]")
    pop = cfg.get("population", DEFAULT_POPULATION)
    ddp = cfg.get("dd_distribution", DEFAULT_POPULATION)
    probs = np.array([float(pop[str(b)]) for b in BloodGroup])
    dprobs = np.array([float(ddp[str(b)]) for b in BloodGroup])
    if abs(probs.sum() - 1) > 1e-9 or abs(dprobs.sum() - 1) > 1e-9:
        raise InputError("distributions must sum to 1")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)

    nodes: List[Node] = []
    nid = 0
    for _ in range(n_pairs):
        recip, donor = _sample_incompatible(rng, probs)
        donors = [(0, BloodGroup(donor))]
        if rng.random() < multi_frac:
            donors.append((1, BloodGroup(int(rng.choice(4, p=probs)))))
        registry = "PWL" if rng.random() < pwl_fraction else "P"
        nodes.append(pair_node(nid, BloodGroup(recip), donors, registry=registry))
        nid += 1
    for _ in range(n_cn):
        recip = int(rng.choice(4, p=probs))
        nodes.append(
            compatible_pair_node(nid, BloodGroup(recip), BloodGroup(recip), self_weight=1.0)
        )
        nid += 1
    for _ in range(n_dds):
        nodes.append(dd_node(nid, BloodGroup(int(rng.choice(4, p=dprobs)))))
        nid += 1
    for b in BloodGroup:
        for _ in range(wl_per_group):
            nodes.append(wl_node(nid, b))
            nid += 1

    save_snapshot(nodes, args.out)
    tally: dict = {}
    for n in nodes:
        kind = n.kind.name
        bg = str(n.donor_bg if n.donor_bg is not None else n.recipient_bg)
        tally.setdefault(kind, {}).setdefault(bg, 0)
        tally[kind][bg] += 1
    print(f"wrote {len(nodes)} nodes to {args.out} (seed {seed})")
    for kind in sorted(tally):
        groups = " ".join(f"{b}:{c}" for b, c in sorted(tally[kind].items()))
        print(f"  {kind}: {groups}")
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _describe_exchange(ex: Exchange, g) -> str:
    def label(nid: int) -> str:
        n = g.node(nid)
        bg = n.donor_bg if n.donor_bg is not None else n.recipient_bg
        return f"{n.kind.name}{nid}({bg})"

    path = " -> ".join(label(v) for v in ex.node_ids)
    if ex.kind == "cycle":
        path += f" -> {label(ex.node_ids[0])}"
    return f"{ex.kind} [{path}] weight {ex.total_weight:g}"


def cmd_solve(args: argparse.Namespace) -> int:
    nodes, policy = load_snapshot(args.snapshot)
    g = build_graph(nodes, policy)
    f = build_compact(
        g, args.k,
        include_cn_constraint=args.include_cn_constraint,
        require_wl_terminus=args.require_wl_terminus,
    )
    if args.dump_lp:
        dump_lp(f, args.dump_lp)
        print(f"formulation written to {args.dump_lp}")

    plans = {}
    backends = ["compact", "packing"] if args.cross_check else [args.backend]
    for backend in backends:
        if backend == "compact":
            plans[backend] = solve_bb(f)
        else:
            plans[backend] = solve_packing(
                g, args.k,
                include_cn_constraint=args.include_cn_constraint,
                require_wl_terminus=args.require_wl_terminus,
            )
    plan = plans[backends[-1]]
    if args.cross_check:
        a, b = plans["compact"].objective, plans["packing"].objective
        if abs(a - b) > 1e-9:
            raise InvariantViolation(f"backends disagree: compact={a} packing={b}")
        print(f"cross-check ok: objective {a:g} from both backends")
    for backend in backends:
        errs = validate_plan(
            g, plans[backend], args.k,
            include_cn_constraint=args.include_cn_constraint,
            require_wl_terminus=args.require_wl_terminus,
        )
        if errs:
            raise InvariantViolation(f"{backend} plan invalid: {errs[0]}")

    print(f"objective: {plan.objective:g} ({len(plan.exchanges)} exchanges)")
    for ex in plan.exchanges:
        print("  " + _describe_exchange(ex, g))
    if args.out:
        _atomic_write(args.out, json.dumps(plan_to_dict(plan), indent=1) + "\n")
        print(f"plan written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cell_name(kep, dd, dp) -> str:
    return f"kep{kep[0]}-{kep[1]}_dd{dd[0]}-{dd[1]}_dp{dp:g}"


def _run_cell(payload: tuple) -> str:
    cell_dir, cfg_dict = payload
    cfg = ScenarioConfig.from_dict(cfg_dict)
    result = run_scenario(cfg)
    tables = summarize(result)
    staging = cell_dir + ".tmp"
    os.makedirs(staging, exist_ok=True)
    tables.write(staging)
    if os.path.isdir(cell_dir):  # stale output from an interrupted run
        import shutil

        shutil.rmtree(cell_dir)
    os.replace(staging, cell_dir)
    return cell_dir


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.time()
    raw = _read_json(args.config) if args.config else {}
    base = dict(raw.get("base", {k: v for k, v in raw.items() if k != "grid"}))
    if args.seed is not None:
        base["rng_seed"] = args.seed
    if args.k is not None:
        base["k"] = args.k
    if args.require_wl_terminus:
        base["require_wl_terminus"] = True
    grid = raw.get("grid")
    single_cell = grid is None and any(
        key in base for key in ("kep_arrival", "dd_arrival", "dropout_prob")
    )
    if single_cell:
        combos = [
            (
                tuple(base.get("kep_arrival", (10, 15))),
                tuple(base.get("dd_arrival", (1, 5))),
                float(base.get("dropout_prob", 0.0)),
            )
        ]
    else:
        grid = grid or DEFAULT_GRID
        keps = grid.get("kep_arrival", DEFAULT_GRID["kep_arrival"])
        dds = grid.get("dd_arrival", DEFAULT_GRID["dd_arrival"])
        dps = grid.get("dropout_prob", DEFAULT_GRID["dropout_prob"])
        combos = [
            (tuple(kep), tuple(dd), float(dp))
            for kep in keps
            for dd in dds
            for dp in dps
        ]

    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, "simulate", args.config, base.get("rng_seed", 0),
                    started, "running", {"cells_expected": len(combos)})
    jobs = []
    for kep, dd, dp in combos:
        cfg_dict = dict(base)
        cfg_dict.update(
            {"kep_arrival": list(kep), "dd_arrival": list(dd), "dropout_prob": dp}
        )
        ScenarioConfig.from_dict(cfg_dict)  # validate before dispatch
        cell_dir = os.path.join(args.out, _cell_name(kep, dd, dp))
        jobs.append((cell_dir, cfg_dict))

    workers = int(os.environ.get("DDCHAIN_THREADS", 0) or 0)
    if workers <= 0:
        workers = min(len(jobs), os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))
    done: List[str] = []
    if workers == 1 or len(jobs) == 1:
        for payload in jobs:
            done.append(_run_cell(payload))
            print(f"finished {os.path.basename(done[-1])}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell in pool.map(_run_cell, jobs):
                done.append(cell)
                print(f"finished {os.path.basename(cell)}")

    combined = {
        "cells": [os.path.basename(d) for d in done],
        "count": len(done),
    }
    _atomic_write(
        os.path.join(args.out, "summary.json"),
        json.dumps(combined, indent=1, sort_keys=True) + "\n",
    )
    status = "complete" if len(done) == len(combos) else "partial"
    _write_manifest(args.out, "simulate", args.config, base.get("rng_seed", 0),
                    started, status,
                    {"cells_expected": len(combos), "cells_completed": len(done)})
    print(f"{len(done)} scenario(s) written under {args.out}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    results = args.results
    top = os.path.join(results, "summary.json")
    if not os.path.isfile(top):
        raise InputError(f"no summary.json in {results}; run simulate first")
    cells = _read_json(top).get("cells", [])
    if not cells:
        raise InputError(f"no scenario cells recorded in {top}")
    out_dir = args.out or os.path.join(results, "report")
    os.makedirs(out_dir, exist_ok=True)

    groups = [str(b) for b in BloodGroup]
    waiting_lines = ["cell,kep,dd,dp,blood_group,ddic,cp"]
    dropout_lines = ["cell,kep,dd,dp,blood_group,ddic,cp"]
    series_lines = ["cell,round,policy,matched,dropouts"]
    for cell in cells:
        summ_path = os.path.join(results, cell, "summary.json")
        rounds_path = os.path.join(results, cell, "rounds.csv")
        if not (os.path.isfile(summ_path) and os.path.isfile(rounds_path)):
            raise InputError(f"missing outputs for cell {cell}")
        summ = _read_json(summ_path)
        cfg = summ["config"]
        kep = "U({},{})".format(*cfg["kep_arrival"])
        dd = "U({},{})".format(*cfg["dd_arrival"])
        dp = cfg["dropout_prob"]
        for bg in groups:
            rec = summ["blood_groups"][bg]
            waiting_lines.append(
                f"{cell},{kep},{dd},{dp:g},{bg},"
                f"{rec['ddic']['mean_wait_censored']:.6f},"
                f"{rec['cp']['mean_wait_censored']:.6f}"
            )
            if dp > 0:
                dropout_lines.append(
                    f"{cell},{kep},{dd},{dp:g},{bg},"
                    f"{rec['ddic']['mean_total_dropouts']:.6f},"
                    f"{rec['cp']['mean_total_dropouts']:.6f}"
                )
        with open(rounds_path) as fh:
            next(fh)
            for line in fh:
                series_lines.append(f"{cell},{line.rstrip()}")

    _atomic_write(os.path.join(out_dir, "waiting_table.csv"), "\n".join(waiting_lines) + "\n")
    _atomic_write(os.path.join(out_dir, "dropouts_table.csv"), "\n".join(dropout_lines) + "\n")
    _atomic_write(os.path.join(out_dir, "rounds_long.csv"), "\n".join(series_lines) + "\n")
    print(f"report tables written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddchain",
        description="Kidney exchange optimization with deceased-donor-initiated chains",
    )
    parser.add_argument("--version", action="version", version=f"ddchain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pool", help="sample a registry snapshot file")
    p.add_argument("--config", required=True, help="pool config JSON")
    p.add_argument("--out", required=True, help="snapshot output path")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_gen_pool)

    p = sub.add_parser("solve", help="solve one registry snapshot")
    p.add_argument("--snapshot", required=True, help="registry snapshot JSON")
    p.add_argument("--k", type=int, default=2, help="max edges per cycle/chain")
    p.add_argument("--backend", choices=["compact", "packing"], default="packing")
    p.add_argument("--cross-check", action="store_true",
                   help="run both backends and compare objectives")
    p.add_argument("--include-cn-constraint", action="store_true",
                   help="enforce the compatible-pair improvement threshold")
    p.add_argument("--require-wl-terminus", action="store_true",
                   help="chains must end at the wait-list, not at a dual-registered pair")
    p.add_argument("--dump-lp", metavar="PATH", help="write the formulation as text")
    p.add_argument("--out", help="write the plan as JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run the scenario grid")
    p.add_argument("--config", help="scenario config JSON (defaults to the full grid)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--k", type=int, default=None, help="override cycle/chain bound")
    p.add_argument("--require-wl-terminus", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="emit comparison tables from simulate output")
    p.add_argument("--results", required=True, help="directory produced by simulate")
    p.add_argument("--out", help="report output directory (default: <results>/report)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        return _die(str(exc), 1)
    except InvariantViolation as exc:
        return _die(f"invariant violation: {exc}", 2)


if __name__ == "__main__":
    sys.exit(main())
