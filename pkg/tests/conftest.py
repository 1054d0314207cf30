"""Shared instance generators for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from ddchain.model import (
    BloodGroup,
    WeightPolicy,
    abo_compatible,
    build_graph,
    compatible_pair_node,
    dd_node,
    pair_node,
    weight_policy_unit,
    wl_node,
)

POP = np.array([0.37, 0.22, 0.32, 0.09])  # O, A, B, AB


def random_instance(rng, n_max=12, kinds_p=(0.2, 0.3, 0.15, 0.15, 0.2), unit_only=False):
    """Small mixed instance: DD / P / PWL / CN / WL nodes, optional table weights."""
    n = int(rng.integers(2, n_max + 1))
    nodes = []
    for i in range(n):
        kind = rng.choice(["dd", "p", "pwl", "cn", "wl"], p=list(kinds_p))
        bg = lambda: BloodGroup(int(rng.integers(0, 4)))
        if kind == "dd":
            nodes.append(dd_node(i, bg()))
        elif kind == "wl":
            nodes.append(wl_node(i, bg()))
        elif kind == "cn":
            r = bg()
            donors = [(0, r)]
            if rng.random() < 0.3:
                donors.append((1, bg()))
            nodes.append(
                compatible_pair_node(i, r, donors, self_weight=float(rng.integers(1, 3)))
            )
        else:
            donors = [(0, bg())]
            if rng.random() < 0.25:
                donors.append((1, bg()))
            nodes.append(
                pair_node(i, bg(), donors, registry="PWL" if kind == "pwl" else "P")
            )
    if unit_only or rng.random() < 0.5:
        pol = weight_policy_unit()
    else:
        wtab = rng.integers(1, 4, size=(4, 4)).astype(float)
        pol = WeightPolicy(
            name="table", score=lambda db, rb, s, t: float(wtab[int(db), int(rb)])
        )
    knockout = float(rng.choice([0.0, 0.3]))
    return build_graph(nodes, pol, knockout_prob=knockout, rng=rng)


def registry_pool(rng, npairs, ndd, wl_per_group, pwl_fraction=0.2, policy=None):
    """Rejection-sampled incompatible-pair pool plus donors and wait-list patients."""
    nodes = []
    i = 0
    for _ in range(npairs):
        while True:
            r = int(rng.choice(4, p=POP))
            d = int(rng.choice(4, p=POP))
            if not abo_compatible(BloodGroup(d), BloodGroup(r)):
                break
        registry = "PWL" if rng.random() < pwl_fraction else "P"
        nodes.append(pair_node(i, BloodGroup(r), BloodGroup(d), registry=registry))
        i += 1
    for _ in range(ndd):
        nodes.append(dd_node(i, BloodGroup(int(rng.choice(4, p=POP)))))
        i += 1
    for b in range(4):
        for _ in range(wl_per_group):
            nodes.append(wl_node(i, BloodGroup(b)))
            i += 1
    return build_graph(nodes, policy or weight_policy_unit())
