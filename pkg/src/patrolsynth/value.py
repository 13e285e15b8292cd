"""Game value of a strategy through the bottom SCCs of its support chain.

The Attacker observes everything and waits, so only the chain's bottom
strongly connected components matter: the value is the minimum over BSCCs of
the largest attack damage on a positive transition inside the component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from .damage import SUPPORT_EPS, Attack, DamageEvaluator
from .strategy import Strategy

DEFAULT_EPS = 0.25


def bsccs(strategy: Strategy, support_eps: float = SUPPORT_EPS) -> list[list[int]]:
    """Bottom SCCs of the transitions with probability above ``support_eps``.

    Components are listed by their smallest state index; states inside a
    component are sorted.
    """
    sp = strategy.space
    n = sp.n_states
    keep = strategy.p > support_eps
    adj = sps.csr_matrix((np.ones(keep.sum()), (sp.src[keep], sp.dst[keep])), shape=(n, n))
    _, label = connected_components(adj, directed=True, connection="strong")
    leaves = label[sp.src[keep]] != label[sp.dst[keep]]
    not_bottom = set(label[sp.src[keep][leaves]].tolist())
    comps = {}
    for c in range(n):
        if label[c] not in not_bottom:
            comps.setdefault(label[c], []).append(c)
    return sorted(comps.values(), key=lambda s: s[0])


@dataclass
class ValueReport:
    value: float
    best_bscc: list[int]
    witness: Attack
    all_eligible: list[Attack]
    bscc_values: list[float] = field(default_factory=list)
    components: list[list[int]] = field(default_factory=list, repr=False)
    evaluator: DamageEvaluator | None = field(default=None, repr=False)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _attack_edges(strategy, comp, support_eps):
    sp = strategy.space
    inside = np.zeros(sp.n_states, dtype=bool)
    inside[comp] = True
    return np.flatnonzero(inside[sp.src] & inside[sp.dst] & (strategy.p > support_eps))


def value(strategy: Strategy, eps: float = DEFAULT_EPS, support_eps: float = SUPPORT_EPS,
          scope: str = "bscc", evaluator: DamageEvaluator | None = None) -> ValueReport:
    """Val(sigma) with its witness attack and the eligible attacks.

    Eligible attacks have damage at least ``(1 - eps) * Val``. With
    ``scope="bscc"`` they are collected inside the value-attaining BSCC only;
    ``scope="all"`` scans every positive transition of the chain.
    """
    if scope not in ("bscc", "all"):
        raise ValueError(f"unknown scope {scope!r}")
    ev = evaluator or DamageEvaluator(strategy, support_eps)
    A = ev.matrix()
    targets = ev.target_ids
    comps = bsccs(strategy, support_eps)
    best, best_val, best_edges, vals = None, math.inf, None, []
    for comp in comps:
        edges = _attack_edges(strategy, comp, support_eps)
        v = float(A[:, edges].max()) if len(edges) else math.inf
        vals.append(v)
        if best is None or v < best_val:
            best, best_val, best_edges = comp, v, edges
    sub = A[:, best_edges]
    ti, ei = np.unravel_index(int(np.argmax(sub)), sub.shape)
    witness = Attack(int(best_edges[ei]), targets[ti], float(sub[ti, ei]))
    eligible = []
    if math.isfinite(best_val):
        if scope == "bscc":
            pool = best_edges
        else:
            pool = np.flatnonzero(strategy.p > support_eps)
        thr = (1.0 - eps) * best_val
        ei, ti = np.nonzero(A[:, pool].T >= thr)
        eligible = [Attack(int(pool[e]), targets[t], float(A[t, pool[e]]))
                    for e, t in zip(ei.tolist(), ti.tolist())]
    return ValueReport(best_val, best, witness, eligible, vals, comps, ev)
