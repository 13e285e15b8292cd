"""Finite-memory strategies as positional strategies over (location, memory) states.

A memory assignment maps each location to a positive number of memory
values. The states are all pairs ``(v, i)`` with ``1 <= i <= mem[v]`` and a
state ``(u, i)`` may move to ``(v, j)`` whenever ``(u, v)`` is a graph edge.

State-edges are stored in CSR order: the outgoing edges of state ``c`` are
``row_ptr[c]:row_ptr[c + 1]``. A strategy is a probability per state-edge; a
parameter block is one unconstrained real per state-edge, mapped to
probabilities by a per-state softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graph import GraphError, PatrollingGraph

MemoryAssignment = dict  # location id -> positive int


class StrategyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateSpace:
    graph: PatrollingGraph
    memory: dict
    states: tuple                # ((location, memory index), ...)
    loc_of: np.ndarray           # state -> location index
    row_ptr: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    time: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_edges(self) -> int:
        return len(self.dst)

    @cached_property
    def index(self) -> dict:
        return {s: k for k, s in enumerate(self.states)}

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.src, self.dst))}

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def edge(self, a, b) -> int:
        """State-edge index from two states given as indices or (loc, i) pairs."""
        if not isinstance(a, (int, np.integer)):
            a = self.index[tuple(a)]
        if not isinstance(b, (int, np.integer)):
            b = self.index[tuple(b)]
        try:
            return self.edge_index[(int(a), int(b))]
        except KeyError:
            raise StrategyError(f"no state-edge {self.states[a]} -> {self.states[b]}") from None

    def edges_of(self, c: int) -> range:
        return range(self.row_ptr[c], self.row_ptr[c + 1])

    def label(self, c: int) -> str:
        v, i = self.states[c]
        return f"{v}#{i}"


def build_state_space(g: PatrollingGraph, mem: MemoryAssignment) -> StateSpace:
    missing = [v for v in g.locations if v not in mem]
    if missing:
        raise StrategyError(f"memory assignment misses locations {missing}")
    extra = sorted(set(mem) - set(g.locations))
    if extra:
        raise StrategyError(f"memory assignment names unknown locations {extra}")
    for v in g.locations:
        if int(mem[v]) != mem[v] or mem[v] < 1:
            raise StrategyError(f"mem({v}) must be a positive integer, got {mem[v]}")
    mem = {v: int(mem[v]) for v in g.locations}
    states, loc_of, first = [], [], {}
    for li, v in enumerate(g.locations):
        first[v] = len(states)
        for i in range(1, mem[v] + 1):
            states.append((v, i))
            loc_of.append(li)
    row_ptr, src, dst, tm = [0], [], [], []
    for c, (u, _) in enumerate(states):
        for v, t in g.out_edges[g.index[u]]:
            for j in range(mem[v]):
                src.append(c)
                dst.append(first[v] + j)
                tm.append(t)
        row_ptr.append(len(dst))
    return StateSpace(
        graph=g, memory=mem, states=tuple(states),
        loc_of=np.array(loc_of, dtype=np.int64),
        row_ptr=np.array(row_ptr, dtype=np.int64),
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        time=np.array(tm, dtype=np.int64),
    )


def uniform_assignment(g: PatrollingGraph, k: int) -> MemoryAssignment:
    if k < 1:
        raise StrategyError(f"uniform memory must be >= 1, got {k}")
    return {v: int(k) for v in g.locations}


def degree_assignment(g: PatrollingGraph) -> MemoryAssignment:
    return {v: g.out_degree(v) for v in g.locations}


@dataclass(frozen=True, eq=False)
class Strategy:
    """Row-stochastic transition probabilities over the state-edges of ``space``."""

    space: StateSpace
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.space.n_edges,):
            raise StrategyError(f"expected {self.space.n_edges} probabilities, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise StrategyError("probabilities must be finite and non-negative")
        object.__setattr__(self, "p", p)

    @property
    def graph(self) -> PatrollingGraph:
        return self.space.graph

    def row(self, c: int) -> np.ndarray:
        return self.p[self.space.row_ptr[c]:self.space.row_ptr[c + 1]]

    def row_sums(self) -> np.ndarray:
        return np.add.reduceat(self.p, self.space.row_ptr[:-1])

    def prob(self, a, b) -> float:
        return float(self.p[self.space.edge(a, b)])

    def to_json(self, min_p: float = 0.0) -> dict:
        sp = self.space
        trans = []
        for k in range(sp.n_edges):
            if self.p[k] > min_p:
                u, i = sp.states[sp.src[k]]
                v, j = sp.states[sp.dst[k]]
                trans.append({"from": [u, i], "to": [v, j], "p": float(self.p[k])})
        return {"memory": dict(sp.memory), "transitions": trans}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def strategy_from_json(doc: dict, g: PatrollingGraph, tol: float = 1e-6) -> Strategy:
    """Load a strategy on ``g``; rows within ``tol`` of 1 are renormalized."""
    if not isinstance(doc, dict) or "memory" not in doc or "transitions" not in doc:
        raise StrategyError("strategy document needs 'memory' and 'transitions'")
    try:
        space = build_state_space(g, {str(k): v for k, v in doc["memory"].items()})
    except GraphError as exc:
        raise StrategyError(str(exc)) from None
    p = np.zeros(space.n_edges)
    for i, tr in enumerate(doc["transitions"]):
        try:
            a = (str(tr["from"][0]), int(tr["from"][1]))
            b = (str(tr["to"][0]), int(tr["to"][1]))
            prob = float(tr["p"])
        except (KeyError, TypeError, IndexError, ValueError):
            raise StrategyError(f"transitions[{i}]: expected from/to pairs and p") from None
        if a not in space.index or b not in space.index:
            raise StrategyError(f"transitions[{i}]: unknown state {a if a not in space.index else b}")
        p[space.edge(a, b)] += prob
    sums = np.add.reduceat(p, space.row_ptr[:-1])
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if len(bad):
        raise StrategyError(
            f"row of state {space.label(int(bad[0]))} sums to {sums[bad[0]]:.6g}, not 1")
    p /= np.repeat(sums, space.out_degree)
    return Strategy(space, p)


# -- softmax parametrization -------------------------------------------------

def softmax_rows(space: StateSpace, x: np.ndarray) -> np.ndarray:
    """Per-state softmax of the flat parameter vector, with max-subtraction."""
    starts = space.row_ptr[:-1]
    counts = space.out_degree
    m = np.maximum.reduceat(x, starts)
    e = np.exp(x - np.repeat(m, counts))
    return e / np.repeat(np.add.reduceat(e, starts), counts)


def softmax_strategy(space: StateSpace, x: np.ndarray) -> Strategy:
    return Strategy(space, softmax_rows(space, np.asarray(x, dtype=float)))


def softmax_jacobian(row) -> np.ndarray:
    """J[i, j] = p_i (delta_ij - p_j)."""
    p = np.asarray(row, dtype=float)
    return np.diag(p) - np.outer(p, p)


def softmax_pullback(space: StateSpace, p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. probabilities back to the softmax parameters.

    Equivalent to applying ``softmax_jacobian(row).T`` row by row.
    """
    inner = np.add.reduceat(p * grad_p, space.row_ptr[:-1])
    return p * (grad_p - np.repeat(inner, space.out_degree))


def init_params(space: StateSpace, rng_seed) -> np.ndarray:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.standard_normal(space.n_edges)


def log_params(strategy: Strategy, floor: float = 1e-300) -> np.ndarray:
    """Softmax parameters reproducing ``strategy``: x = log p."""
    return np.log(np.maximum(strategy.p, floor))


# -- warm-start expansion ----------------------------------------------------

def expand_strategy(strategy: Strategy, copies: dict) -> Strategy:
    """Split each state ``c`` into ``copies[c]`` identical copies.

    ``copies`` is keyed by (location, memory index). The copies of a location
    are numbered consecutively in the order of the original memory values.
    Every copy keeps the original outgoing distribution, with the mass that
    went to ``x`` shared equally among the copies of ``x``.
    """
    sp = strategy.space
    g = sp.graph
    try:
        n_copies = [int(copies[s]) for s in sp.states]
    except KeyError as exc:
        raise StrategyError(f"copies missing state {exc.args[0]}") from None
    if min(n_copies) < 1:
        raise StrategyError("every state needs at least one copy")
    mem2 = {v: 0 for v in g.locations}
    new_ids = []  # old state -> list of new (loc, i)
    for (v, _), k in zip(sp.states, n_copies):
        new_ids.append([(v, mem2[v] + j + 1) for j in range(k)])
        mem2[v] += k
    space2 = build_state_space(g, mem2)
    p2 = np.zeros(space2.n_edges)
    for e in range(sp.n_edges):
        a, b = int(sp.src[e]), int(sp.dst[e])
        share = strategy.p[e] / n_copies[b]
        for ai in new_ids[a]:
            for bj in new_ids[b]:
                p2[space2.edge(ai, bj)] = share
    return Strategy(space2, p2)


def copy_origin(strategy: Strategy, copies: dict) -> dict:
    """Map each state of the expanded space to the original state it copies."""
    origin = {}
    counter = {v: 0 for v in strategy.space.graph.locations}
    for s in strategy.space.states:
        v = s[0]
        for _ in range(int(copies[s])):
            counter[v] += 1
            origin[(v, counter[v])] = s
    return origin
