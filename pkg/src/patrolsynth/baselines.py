"""Deterministic cycle baselines.

A closed walk ``w0 w1 ... w(L-1)`` becomes a deterministic strategy whose
memory at ``v`` is the number of occurrences of ``v`` in the walk. Locations
off the walk get one state that heads along a shortest path back to it, so
the walk is the only bottom component.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, shortest_path

from .graph import PatrollingGraph
from .strategy import Strategy, build_state_space
from .value import value

METHODS = ("eulerian", "tsp")


class BaselineError(ValueError):
    pass


@dataclass
class Baseline:
    method: str
    walk: list
    length: int
    strategy: Strategy
    value: float


def walk_length(g: PatrollingGraph, walk) -> int:
    return sum(g.time(walk[i], walk[(i + 1) % len(walk)]) for i in range(len(walk)))


def _toward_walk(g: PatrollingGraph, on_walk: set) -> dict:
    """Successor on a shortest hop path to the walk for each off-walk location."""
    step = {}
    preds = {v: [] for v in g.locations}
    for u, v, _ in g.edges:
        preds[v].append(u)
    queue = deque(sorted(on_walk, key=g.index.get))
    seen = set(on_walk)
    while queue:
        v = queue.popleft()
        for u in preds[v]:
            if u not in seen:
                seen.add(u)
                step[u] = v
                queue.append(u)
    return step


def cycle_strategy(g: PatrollingGraph, walk) -> Strategy:
    """Deterministic strategy following the closed walk ``walk`` forever."""
    walk = list(walk)
    if not walk:
        raise BaselineError("walk is empty")
    L = len(walk)
    for i in range(L):
        u, v = walk[i], walk[(i + 1) % L]
        try:
            g.time(u, v)
        except KeyError as exc:
            raise BaselineError(f"walk uses missing edge {u} -> {v}") from exc
    mem = {v: 1 for v in g.locations}
    occ = []
    seen = {}
    for v in walk:
        seen[v] = seen.get(v, 0) + 1
        occ.append((v, seen[v]))
    for v, k in seen.items():
        mem[v] = k
    space = build_state_space(g, mem)
    p = np.zeros(space.n_edges)
    for i in range(L):
        p[space.edge(occ[i], occ[(i + 1) % L])] = 1.0
    step = _toward_walk(g, set(walk))
    for v in g.locations:
        if v not in seen:
            p[space.edge((v, 1), (step[v], 1))] = 1.0
    return Strategy(space, p)


def _metric(g: PatrollingGraph):
    n = len(g.locations)
    rows, cols, w = [], [], []
    for u, v, t in g.edges:
        if u != v:
            rows.append(g.index[u])
            cols.append(g.index[v])
            w.append(t)
    W = csr_matrix((w, (rows, cols)), shape=(n, n))
    dist, pred = shortest_path(W, directed=True, return_predecessors=True)
    return dist, pred


def _path(pred, a, b) -> list:
    out = [b]
    while out[-1] != a:
        out.append(int(pred[a, out[-1]]))
    return out[::-1]


def _tour_cost(dist, order) -> float:
    return sum(dist[order[i], order[(i + 1) % len(order)]] for i in range(len(order)))


def tsp_order(dist: np.ndarray, nodes: list) -> list:
    """Nearest-neighbour tour over ``nodes`` improved by 2-opt."""
    if len(nodes) <= 2:
        return list(nodes)
    order = [nodes[0]]
    rest = set(nodes[1:])
    while rest:
        last = order[-1]
        nxt = min(rest, key=lambda v: (dist[last, v], v))
        order.append(nxt)
        rest.discard(nxt)
    improved = True
    while improved:
        improved = False
        n = len(order)
        for i in range(n - 1):
            for j in range(i + 2, n if i else n - 1):
                cand = order[:i + 1] + order[i + 1:j + 1][::-1] + order[j + 1:]
                if _tour_cost(dist, cand) < _tour_cost(dist, order) - 1e-9:
                    order, improved = cand, True
    return order


def tsp_walk(g: PatrollingGraph) -> list:
    """Closed walk through all targets following an approximate TSP tour."""
    dist, pred = _metric(g)
    order = tsp_order(dist, [g.index[t] for t in g.target_ids])
    if len(order) == 1:
        # shortest cycle through the single target
        u = order[0]
        steps = [(t + (0 if g.index[v] == u else dist[g.index[v], u]), g.index[v])
                 for v, t in g.out_edges[u]]
        _, v = min(steps)
        walk = [u] + (_path(pred, v, u)[:-1] if v != u else [])
    else:
        walk = []
        for i in range(len(order)):
            walk += _path(pred, order[i], order[(i + 1) % len(order)])[:-1]
    return [g.locations[i] for i in walk]


def eulerian_walk(g: PatrollingGraph) -> list:
    """Depth-first traversal of a BFS spanning tree, each tree edge walked twice.

    Every location is on the walk and occurs once per incident tree edge,
    so the memory it needs is at most its degree.
    """
    n = len(g.locations)
    arcs = {(u, v) for u, v, _ in g.edges if u != v}
    if any((v, u) not in arcs for u, v in arcs):
        raise BaselineError("eulerian baseline needs every edge in both directions")
    if n == 1:
        return [g.locations[0]]
    rows, cols = zip(*[(g.index[u], g.index[v]) for u, v in sorted(arcs)])
    A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, pred = breadth_first_order(A, 0, directed=True, return_predecessors=True)
    children = {i: [] for i in range(n)}
    for v in range(n):
        if pred[v] >= 0:
            children[int(pred[v])].append(v)
    walk, stack = [0], [(0, iter(children[0]))]
    while stack:
        u, it = stack[-1]
        c = next(it, None)
        if c is None:
            stack.pop()
            if stack:
                walk.append(stack[-1][0])
            continue
        walk.append(c)
        stack.append((c, iter(children[c])))
    walk.pop()  # the closing return to the root is implied
    return [g.locations[i] for i in walk]


def baseline_cycle(g: PatrollingGraph, method: str = "tsp") -> Baseline:
    """Deterministic cycle baseline and its exact game value."""
    if method not in METHODS:
        raise BaselineError(f"unknown baseline method {method!r}; use {' or '.join(METHODS)}")
    walk = tsp_walk(g) if method == "tsp" else eulerian_walk(g)
    strat = cycle_strategy(g, walk)
    val = value(strat).value
    return Baseline(method, walk, walk_length(g, walk), strat, val)
