"""Independent brute-force validators.

Nothing here reuses the sparse evaluation code: strategies are converted to
dense matrices, bounded damage is computed by pushing probability mass
forward in time (the production code runs a backward recursion), linear
damage uses a dense solve with reachability from a boolean closure, and the
game value is taken over start states rather than over BSCCs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

SUPPORT_EPS = 1e-9
MAX_PATHS = 10_000_000
MAX_CANDIDATES = 10_000_000


class OracleError(RuntimeError):
    pass


@dataclass
class OracleReport:
    quantity: str
    oracle: float
    system: float
    abs_err: float
    rel_err: float
    instance: str = ""

    @classmethod
    def compare(cls, quantity, oracle, system, instance=""):
        oracle, system = float(oracle), float(system)
        if oracle == system:
            return cls(quantity, oracle, system, 0.0, 0.0, instance)
        err = abs(oracle - system)
        return cls(quantity, oracle, system, err, err / max(abs(oracle), abs(system)), instance)


class Dense:
    """Dense view of a strategy: P[a, b], T[a, b] and state locations."""

    def __init__(self, strategy):
        sp = strategy.space
        g = sp.graph
        self.graph = g
        self.states = list(sp.states)
        n = len(self.states)
        self.n = n
        self.loc = [v for v, _ in self.states]
        self.P = np.zeros((n, n))
        self.T = np.zeros((n, n), dtype=int)
        pos = {s: i for i, s in enumerate(self.states)}
        for a, (u, _) in enumerate(self.states):
            for v, t in ((w, g.time(u, w)) for w in _succ(g, u)):
                for j in range(1, sp.memory[v] + 1):
                    self.T[a, pos[(v, j)]] = t
        for k in range(len(strategy.p)):
            self.P[sp.src[k], sp.dst[k]] = strategy.p[k]
        self.pos = pos

    def with_p(self, P):
        other = object.__new__(Dense)
        other.__dict__.update(self.__dict__)
        other.P = P
        return other

    def at(self, tau):
        return np.array([v == tau for v in self.loc])

    def edges(self, eps=SUPPORT_EPS):
        return [(a, b) for a in range(self.n) for b in range(self.n)
                if self.T[a, b] > 0 and self.P[a, b] > eps]


def _succ(g, u):
    return [v for a, v, _ in g.edges if a == u]


# -- damage ------------------------------------------------------------------

def bounded_damage_batch(D: Dense, attacks, tau):
    """Forward mass propagation for many attack edges on one hard/blind target."""
    spec = D.graph.targets[tau]
    d, alpha, beta = spec.d, spec.alpha, spec.discovery
    miss = np.where(D.at(tau), 1.0 - beta, 1.0)
    A = len(attacks)
    horizon = d + int(D.T.max()) + 2
    M = np.zeros((horizon, A, D.n))
    out = np.zeros(A)
    for i, (a, b) in enumerate(attacks):
        t0 = D.T[a, b]
        if t0 > d:
            out[i] = 1.0
        else:
            M[t0, i, b] = 1.0
    times = sorted(set(D.T[D.T > 0].tolist()))
    masks = {s: (D.T == s) for s in times}
    for t in range(d + 1):
        m = M[t] * miss
        if not m.any():
            continue
        flow = m[:, :, None] * D.P[None, :, :]
        for s in times:
            part = (flow * masks[s]).sum(axis=1)
            if t + s > d:
                out += part.sum(axis=1)
            else:
                M[t + s] += part
    return alpha * out


def _closure(adj: np.ndarray) -> np.ndarray:
    R = adj.copy() | np.eye(len(adj), dtype=bool)
    for k in range(len(adj)):
        R |= R[:, [k]] & R[[k], :]
    return R


def hitting_times(D: Dense, tau, eps=SUPPORT_EPS):
    """Expected time to reach ``tau`` from each state; inf unless reached a.s."""
    at = D.at(tau)
    adj = (D.P > eps) & (D.T > 0)
    adj[at, :] = False
    R = _closure(adj)
    can = R[:, at].any(axis=1)
    good = np.array([at[c] or (can[c] and can[R[c]].all()) for c in range(D.n)])
    unk = np.flatnonzero(good & ~at)
    h = np.full(D.n, np.inf)
    h[at] = 0.0
    if len(unk):
        Pg = np.where(good[None, :], D.P, 0.0)
        b = (Pg * D.T).sum(axis=1)[unk]
        A = np.eye(len(unk)) - Pg[np.ix_(unk, unk)]
        h[unk] = np.linalg.solve(A, b)
    return h


def dense_damage(D: Dense, attack_edges, tau, eps=SUPPORT_EPS):
    spec = D.graph.targets[tau]
    if spec.kind == "linear":
        h = hitting_times(D, tau, eps)
        return np.array([spec.value_rate * (D.T[a, b] + h[b]) for a, b in attack_edges])
    return bounded_damage_batch(D, attack_edges, tau)


def brute_value(strategy, eps=SUPPORT_EPS) -> float:
    """min over start states of the max damage over reachable positive transitions."""
    D = Dense(strategy)
    if D.n > 64:
        raise OracleError(f"{D.n} states is too many for brute_value")
    edges = D.edges(eps)
    table = np.vstack([dense_damage(D, edges, tau, eps) for tau in D.graph.target_ids])
    best_per_edge = table.max(axis=0)
    R = _closure((D.P > eps) & (D.T > 0))
    best = math.inf
    for c in range(D.n):
        reach = [i for i, (a, _) in enumerate(edges) if R[c, a]]
        v = max(best_per_edge[i] for i in reach) if reach else math.inf
        best = min(best, v)
    return float(best)


def path_sum_damage(strategy, e, tau, depth_cap=None, samples=1_000_000, seed=0):
    """Damage by explicit path enumeration (hard/blind) or Monte Carlo (linear).

    ``e`` is a pair of state indices. Returns ``(value, standard error)``;
    the error is 0 for the exact enumeration.
    """
    D = Dense(strategy)
    a, b = e
    spec = D.graph.targets[tau]
    if spec.kind == "linear":
        return _mc_linear(D, a, b, tau, samples, seed)
    d = spec.d
    if depth_cap is None:
        depth_cap = d
    if depth_cap < d:
        raise OracleError("depth_cap must be at least the attack duration")
    beta = spec.discovery
    t0 = D.T[a, b]
    if t0 > d:
        return spec.alpha, 0.0
    count = 0
    survive = 0.0
    # stack of (state, arrival time, path probability, depth)
    stack = [(b, t0, 1.0, 1)]
    while stack:
        c, t, prob, depth = stack.pop()
        count += 1
        if count > MAX_PATHS:
            raise OracleError("path enumeration exceeded the path budget")
        if D.loc[c] == tau:
            prob *= 1.0 - beta
            if prob == 0.0:
                continue
        for c2 in range(D.n):
            q = D.P[c, c2]
            if q <= 0 or D.T[c, c2] == 0:
                continue
            t2 = t + D.T[c, c2]
            if t2 > d:
                survive += prob * q
            elif depth < depth_cap:
                stack.append((c2, t2, prob * q, depth + 1))
    return spec.alpha * survive, 0.0


def _mc_linear(D, a, b, tau, samples, seed, max_steps=100_000):
    rng = np.random.default_rng(seed)
    spec = D.graph.targets[tau]
    at = D.at(tau)
    cum = np.cumsum(D.P, axis=1)
    pos = np.full(samples, b)
    elapsed = np.full(samples, float(D.T[a, b]))
    active = ~at[pos]
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        u = rng.random(len(idx))
        nxt = (cum[pos[idx]] < u[:, None]).sum(axis=1)
        nxt = np.minimum(nxt, D.n - 1)
        elapsed[idx] += D.T[pos[idx], nxt]
        pos[idx] = nxt
        active[idx] = ~at[nxt]
    else:
        raise OracleError("Monte Carlo walks did not all reach the target")
    vals = spec.value_rate * elapsed
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


# -- gradients ---------------------------------------------------------------

def _dense_softmax(D, X):
    mask = D.T > 0
    Z = np.where(mask, X, -np.inf)
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.where(mask, np.exp(Z), 0.0)
    return E / E.sum(axis=1, keepdims=True)


def fd_gradient(strategy, e, tau, step=1e-6, eps=SUPPORT_EPS):
    """Central differences of D(e, tau) w.r.t. softmax parameters x = log p.

    Returns a vector aligned with the strategy's state-edges.
    """
    D = Dense(strategy)
    sp = strategy.space
    a, b = e
    with np.errstate(divide="ignore"):
        X = np.where(D.T > 0, np.log(np.maximum(D.P, 1e-300)), -np.inf)
    out = np.zeros(len(strategy.p))
    for k in range(len(strategy.p)):
        r, c = sp.src[k], sp.dst[k]
        vals = []
        for sgn in (1.0, -1.0):
            Xk = X.copy()
            Xk[r, c] += sgn * step
            vals.append(dense_damage(D.with_p(_dense_softmax(D, Xk)), [(a, b)], tau, eps)[0])
        out[k] = (vals[0] - vals[1]) / (2 * step)
    return out


# -- deterministic search ----------------------------------------------------

def walk_value(g, walk) -> float:
    """Game value of the deterministic cycle ``walk`` (locations, closing edge implied)."""
    L = len(walk)
    times = [g.time(walk[i], walk[(i + 1) % L]) for i in range(L)]
    worst = 0.0
    for tau in g.target_ids:
        spec = g.targets[tau]
        if spec.kind == "linear" and tau not in walk:
            return math.inf
        for i in range(L):
            t, j, visits = 0, i, 0
            while True:
                t += times[j % L]
                j += 1
                if spec.kind == "linear":
                    if walk[j % L] == tau:
                        worst = max(worst, spec.value_rate * t)
                        break
                    continue
                if t > spec.d:
                    break
                if walk[j % L] == tau:
                    visits += 1
            if spec.kind != "linear":
                worst = max(worst, spec.alpha * (1.0 - spec.discovery) ** visits)
    return worst


def best_deterministic_walk(g, state_bound: int):
    """Exhaustive minimum over deterministic finite-memory strategies.

    A deterministic strategy's bottom components are simple cycles of
    states, i.e. closed walks in which location ``v`` occurs at most
    ``mem(v)`` times. Walks are enumerated from their smallest location (a
    rotation canonicalizes memory-index permutations), and a walk of length
    ``L`` fits when ``L`` plus one state per unvisited location is within
    ``state_bound``.
    """
    idx = g.index
    succ = {u: [v for v, _ in g.out_edges[idx[u]]] for u in g.locations}
    best, best_walk = math.inf, None
    count = 0
    nloc = len(g.locations)
    for s in g.locations:
        stack = [[s]]
        while stack:
            walk = stack.pop()
            count += 1
            if count > MAX_CANDIDATES:
                raise OracleError("deterministic search space is too large")
            visited = len(set(walk))
            for v in succ[walk[-1]]:
                if idx[v] < idx[s]:
                    continue
                if v == s:
                    if len(walk) + (nloc - visited) <= state_bound:
                        val = walk_value(g, walk)
                        if val < best:
                            best, best_walk = val, list(walk)
                if len(walk) + 1 + (nloc - len(set(walk + [v]))) <= state_bound:
                    stack.append(walk + [v])
    return best, best_walk


def best_deterministic(g, state_bound: int) -> float:
    return best_deterministic_walk(g, state_bound)[0]


# -- tours -------------------------------------------------------------------

def covering_tour_length(g, targets) -> int:
    """Length of the shortest closed walk visiting every location in ``targets``.

    Exact: a Steiner-subtree doubling on symmetric trees, Held-Karp over the
    metric closure otherwise (at most 16 targets).
    """
    targets = list(targets)
    pairs = {(u, v): t for u, v, t in g.edges}
    symmetric = all(pairs.get((v, u)) == t for (u, v), t in pairs.items())
    und = {tuple(sorted(k)) for k in pairs if k[0] != k[1]}
    if symmetric and len(und) == len(g.locations) - 1:
        adj = {v: set() for v in g.locations}
        for u, v in und:
            adj[u].add(v)
            adj[v].add(u)
        keep = set(g.locations)
        leaves = [v for v in keep if len(adj[v]) <= 1 and v not in targets]
        while leaves:
            v = leaves.pop()
            if v not in keep:
                continue
            keep.discard(v)
            for w in adj[v]:
                adj[w].discard(v)
                if len(adj[w]) <= 1 and w not in targets and w in keep:
                    leaves.append(w)
            adj[v] = set()
        total = sum(pairs[(u, v)] for u, v in und if u in keep and v in keep)
        return 2 * total
    if len(targets) > 16:
        raise OracleError("Held-Karp limited to 16 targets")
    n = len(g.locations)
    W = np.zeros((n, n))
    for (u, v), t in pairs.items():
        if u != v:
            W[g.index[u], g.index[v]] = t
    dist = shortest_path(W, directed=True)
    ti = [g.index[t] for t in targets]
    k = len(ti)
    if k == 1:
        return 0
    full = (1 << k) - 1
    dp = {(1, 0): 0.0}
    for mask in range(1, full + 1):
        if not mask & 1:
            continue
        for j in range(k):
            if (mask, j) not in dp:
                continue
            base = dp[(mask, j)]
            for nxt in range(k):
                if mask & (1 << nxt):
                    continue
                key = (mask | (1 << nxt), nxt)
                cand = base + dist[ti[j], ti[nxt]]
                if cand < dp.get(key, math.inf):
                    dp[key] = cand
    return int(round(min(dp[(full, j)] + dist[ti[j], ti[0]] for j in range(1, k))))


__all__ = [
    "OracleReport", "OracleError", "Dense", "brute_value", "path_sum_damage", "fd_gradient",
    "best_deterministic", "best_deterministic_walk", "walk_value", "covering_tour_length",
    "hitting_times", "dense_damage",
]
