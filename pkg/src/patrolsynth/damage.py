"""Exact attack damage D(e, tau | sigma) and its gradient.

An attack is a pair (state-edge ``e = (c, c')``, target ``tau``): the
Attacker strikes the moment the Defender commits to ``e``.

Hard and blind targets use a survival table over (remaining budget, state)::

    W[r, c] = m(c) * sum_k p_k * (1 if t_k > r else W[r - t_k, dst_k])

where ``m(c) = 1 - beta`` at states located on ``tau`` and 1 elsewhere. An
arrival with cumulative time exactly ``d`` still catches the Attacker. The
damage is ``alpha`` when ``time(e) > d`` and ``alpha * W[d - time(e), c']``
otherwise. One table per target serves every attack edge.

Linear targets use expected hitting times ``h`` of the states located on
``tau``, restricted to states that reach ``tau`` almost surely along
transitions above ``support_eps``; elsewhere ``h`` is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from numba import njit
from scipy.sparse.linalg import splu

from .graph import LINEAR
from .strategy import Strategy

SUPPORT_EPS = 1e-9


class InfiniteDamage(ArithmeticError):
    """The attack value is infinite, so its gradient is undefined."""


@njit(cache=True)
def _survival_forward(row_ptr, dst, tm, p, miss, d):
    n = len(row_ptr) - 1
    W = np.empty((d + 1, n))
    for r in range(d + 1):
        for c in range(n):
            s = 0.0
            for k in range(row_ptr[c], row_ptr[c + 1]):
                t = tm[k]
                if t > r:
                    s += p[k]
                else:
                    s += p[k] * W[r - t, dst[k]]
            W[r, c] = miss[c] * s
    return W


@njit(cache=True)
def _survival_backward(row_ptr, dst, tm, p, miss, W, Wbar):
    # Wbar is consumed in place; budgets only decrease along edges.
    n = len(row_ptr) - 1
    grad = np.zeros(len(p))
    for r in range(W.shape[0] - 1, -1, -1):
        for c in range(n):
            gb = Wbar[r, c] * miss[c]
            if gb == 0.0:
                continue
            for k in range(row_ptr[c], row_ptr[c + 1]):
                t = tm[k]
                if t > r:
                    grad[k] += gb
                else:
                    grad[k] += gb * W[r - t, dst[k]]
                    Wbar[r - t, dst[k]] += gb * p[k]
    return grad


@dataclass
class Attack:
    edge: int
    target: str
    value: float
    grad: np.ndarray | None = field(default=None, repr=False)


class _BoundedTarget:
    def __init__(self, space, p, tau_loc, spec):
        self.alpha = float(spec.alpha)
        self.d = int(spec.d)
        self.miss = np.where(space.loc_of == tau_loc, 1.0 - spec.discovery, 1.0)
        self.space = space
        self.p = p
        self.W = _survival_forward(space.row_ptr, space.dst, space.time, p, self.miss, self.d)
        t = space.time
        inside = t <= self.d
        vals = np.full(space.n_edges, self.alpha)
        vals[inside] = self.alpha * self.W[self.d - t[inside], space.dst[inside]]
        self.values = vals

    def grad(self, edges, weights):
        sp = self.space
        Wbar = np.zeros_like(self.W)
        for k, w in zip(edges, weights):
            t = sp.time[k]
            if t <= self.d:
                Wbar[self.d - t, sp.dst[k]] += w * self.alpha
        return _survival_backward(sp.row_ptr, sp.dst, sp.time, self.p, self.miss, self.W, Wbar)


class _LinearTarget:
    def __init__(self, space, p, tau_loc, spec, support_eps):
        self.rate = float(spec.value_rate)
        self.space = space
        n = space.n_states
        at_tau = space.loc_of == tau_loc
        self.at_tau = at_tau
        finite = almost_sure_reach(space, p > support_eps, at_tau)
        self.finite = finite
        src, dst, t = space.src, space.dst, space.time
        # unknowns: non-target states of the finite region
        unk = finite & ~at_tau
        self.unk_idx = np.flatnonzero(unk)
        pos = np.full(n, -1)
        pos[self.unk_idx] = np.arange(len(self.unk_idx))
        self.pos = pos
        live = unk[src] & finite[dst]
        self.live = live
        b = np.bincount(pos[src[live]], weights=p[live] * t[live], minlength=len(self.unk_idx))
        inner = live & unk[dst]
        A = sps.csc_matrix(
            (-p[inner], (pos[src[inner]], pos[dst[inner]])),
            shape=(len(self.unk_idx),) * 2) + sps.identity(len(self.unk_idx), format="csc")
        h = np.full(n, np.inf)
        h[at_tau] = 0.0
        self.lu = None
        if len(self.unk_idx):
            self.lu = splu(A)
            h[self.unk_idx] = self.lu.solve(b)
        self.h = h
        self.values = self.rate * (t + h[dst])

    def grad(self, edges, weights):
        sp = self.space
        seed = np.zeros(len(self.unk_idx))
        for k, w in zip(edges, weights):
            c = sp.dst[k]
            if not self.finite[c]:
                raise InfiniteDamage(f"attack on edge {k} has infinite damage")
            if self.pos[c] >= 0:
                seed[self.pos[c]] += w * self.rate
        out = np.zeros(sp.n_edges)
        if self.lu is None or not seed.any():
            return out
        lam = self.lu.solve(seed, trans="T")
        live = self.live
        out[live] = lam[self.pos[sp.src[live]]] * (sp.time[live] + self.h[sp.dst[live]])
        return out


def almost_sure_reach(space, support: np.ndarray, at_tau: np.ndarray) -> np.ndarray:
    """States from which the support chain reaches ``at_tau`` with probability 1."""
    n = space.n_states
    src, dst = space.src[support], space.dst[support]
    preds = [[] for _ in range(n)]
    for a, b in zip(src.tolist(), dst.tolist()):
        preds[b].append(a)
    reach = at_tau.copy()
    stack = list(np.flatnonzero(at_tau))
    while stack:
        for a in preds[stack.pop()]:
            if not reach[a]:
                reach[a] = True
                stack.append(a)
    # drop non-target states that can step outside the region, until stable
    good = reach.copy()
    while True:
        leak = np.zeros(n, dtype=bool)
        bad = ~good[dst]
        leak[src[bad]] = True
        drop = good & leak & ~at_tau
        if not drop.any():
            return good
        good &= ~drop


class DamageEvaluator:
    """Attack values and gradients for every state-edge and target of a strategy.

    Per-target work (the survival table or the hitting-time factorization) is
    computed lazily and cached, so evaluating many attacks on one target
    costs a single forward pass.
    """

    def __init__(self, strategy: Strategy, support_eps: float = SUPPORT_EPS):
        self.strategy = strategy
        self.space = strategy.space
        self.graph = strategy.space.graph
        self.support_eps = support_eps
        self.target_ids = self.graph.target_ids
        self._cache = {}

    def _target(self, tau: str):
        if tau not in self._cache:
            g = self.graph
            spec = g.targets[tau]
            if spec.kind == LINEAR:
                self._cache[tau] = _LinearTarget(
                    self.space, self.strategy.p, g.index[tau], spec, self.support_eps)
            else:
                self._cache[tau] = _BoundedTarget(self.space, self.strategy.p, g.index[tau], spec)
        return self._cache[tau]

    def values(self, tau: str) -> np.ndarray:
        return self._target(tau).values

    def matrix(self) -> np.ndarray:
        """Attack values, shape (targets, state-edges), targets in location order."""
        return np.vstack([self.values(t) for t in self.target_ids])

    def value(self, edge: int, tau: str) -> float:
        return float(self.values(tau)[edge])

    def grad_p(self, attacks) -> np.ndarray:
        """Gradient w.r.t. transition probabilities of ``sum w * D(e, tau)``.

        ``attacks`` yields ``(edge, target, weight)`` triples. Only
        transitions with positive probability receive entries.
        """
        by_target = {}
        for k, tau, w in attacks:
            by_target.setdefault(tau, ([], []))
            by_target[tau][0].append(int(k))
            by_target[tau][1].append(float(w))
        total = np.zeros(self.space.n_edges)
        for tau, (ks, ws) in by_target.items():
            tgt = self._target(tau)
            if any(not math.isfinite(tgt.values[k]) for k in ks):
                raise InfiniteDamage(f"attack on {tau} has infinite damage")
            total += tgt.grad(ks, ws)
        total[self.strategy.p <= 0] = 0.0
        return total

    def attack(self, edge: int, tau: str, with_grad: bool = False) -> Attack:
        val = self.value(edge, tau)
        grad = self.grad_p([(edge, tau, 1.0)]) if with_grad and math.isfinite(val) else None
        return Attack(int(edge), tau, val, grad)


def _check_kind(strategy, tau, bounded):
    spec = strategy.graph.targets.get(tau)
    if spec is None:
        raise KeyError(f"{tau!r} is not a target")
    if spec.bounded != bounded:
        raise ValueError(f"target {tau!r} has kind {spec.kind}")


def _edge(strategy, e) -> int:
    if isinstance(e, (int, np.integer)):
        return int(e)
    a, b = e
    return strategy.space.edge(a, b)


def damage_blind(strategy: Strategy, e, tau: str) -> float:
    """Damage of a hard-constrained or blind target; ``e`` is an edge index or state pair."""
    _check_kind(strategy, tau, bounded=True)
    return DamageEvaluator(strategy).value(_edge(strategy, e), tau)


def damage_linear(strategy: Strategy, e, tau: str, support_eps: float = SUPPORT_EPS) -> float:
    _check_kind(strategy, tau, bounded=False)
    return DamageEvaluator(strategy, support_eps).value(_edge(strategy, e), tau)


def damage_grad(strategy: Strategy, e, tau: str, support_eps: float = SUPPORT_EPS) -> np.ndarray:
    """dD(e, tau)/d sigma for every state-edge (zero off the support).

    Raises :class:`InfiniteDamage` when the damage is infinite.
    """
    ev = DamageEvaluator(strategy, support_eps)
    k = _edge(strategy, e)
    if not math.isfinite(ev.value(k, tau)):
        raise InfiniteDamage(f"D({k}, {tau}) is infinite")
    return ev.grad_p([(k, tau, 1.0)])
