"""Automatic memory assignment from attack profiles.

For every near-maximal (eligible) attack and every state, the attack's
gradient w.r.t. the state's softmax parameters is reduced to its sign
pattern. Distinct sign patterns at one state are conflicting directions the
optimizer cannot satisfy at once; each gets its own memory value in the next
assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .damage import SUPPORT_EPS, Attack, DamageEvaluator
from .strategy import Strategy
from .value import DEFAULT_EPS, value

ZERO_TOL = 1e-9


class MemoryAdjustError(ValueError):
    pass


@dataclass(frozen=True)
class AttackProfile:
    state: int
    signs: tuple


@dataclass
class ProfileLedger:
    """Distinct profiles per state, with the summed damage of attacks behind each.

    ``entries[c]`` maps a sign tuple to its accumulated value; dict order is
    first-insertion order, which is deterministic given the attack order.
    """

    entries: list = field(default_factory=list)
    n_attacks: int = 0

    def count(self, c: int) -> int:
        return len(self.entries[c])

    def profiles(self, c: int) -> list:
        return list(self.entries[c])

    def val(self, c: int, signs: tuple) -> float:
        return self.entries[c][signs]


def _support_rows(strategy: Strategy, support_eps: float) -> np.ndarray:
    sp = strategy.space
    p = np.where(strategy.p > support_eps, strategy.p, 0.0)
    sums = np.add.reduceat(p, sp.row_ptr[:-1])
    return p / np.repeat(np.where(sums > 0, sums, 1.0), sp.out_degree)


def _param_grads(strategy, p_sup, grad_p):
    # J^T g per state, with J built from the support-restricted row
    sp = strategy.space
    g = np.where(p_sup > 0, grad_p, 0.0)
    inner = np.add.reduceat(p_sup * g, sp.row_ptr[:-1])
    return p_sup * (g - np.repeat(inner, sp.out_degree))


def _quantize(v: np.ndarray, zero_tol: float) -> np.ndarray:
    s = np.sign(v).astype(np.int8)
    s[np.abs(v) < zero_tol] = 0
    return s


def attack_profile(strategy: Strategy, attack: Attack, state: int,
                   zero_tol: float = ZERO_TOL, support_eps: float = SUPPORT_EPS) -> AttackProfile:
    """Sign of the attack gradient w.r.t. the softmax parameters of ``state``.

    The sign vector covers all outgoing edges of the state; edges outside the
    support are 0.
    """
    if not math.isfinite(attack.value):
        raise MemoryAdjustError("attack with infinite damage has no profile")
    grad = attack.grad
    if grad is None:
        grad = DamageEvaluator(strategy, support_eps).grad_p([(attack.edge, attack.target, 1.0)])
    p_sup = _support_rows(strategy, support_eps)
    q = _param_grads(strategy, p_sup, grad)
    sl = slice(strategy.space.row_ptr[state], strategy.space.row_ptr[state + 1])
    return AttackProfile(int(state), tuple(int(x) for x in _quantize(q[sl], zero_tol)))


def profile_ledger(strategy: Strategy, attacks, evaluator: DamageEvaluator,
                   zero_tol: float = ZERO_TOL, support_eps: float = SUPPORT_EPS) -> ProfileLedger:
    sp = strategy.space
    p_sup = _support_rows(strategy, support_eps)
    entries = [dict() for _ in range(sp.n_states)]
    rp = sp.row_ptr.tolist()
    for att in attacks:
        grad = evaluator.grad_p([(att.edge, att.target, 1.0)])
        signs = _quantize(_param_grads(strategy, p_sup, grad), zero_tol).tolist()
        for c in range(sp.n_states):
            key = tuple(signs[rp[c]:rp[c + 1]])
            entries[c][key] = entries[c].get(key, 0.0) + att.value
    return ProfileLedger(entries, len(attacks))


def _eligible(strategy, eps, support_eps, scope):
    rep = value(strategy, eps=eps, support_eps=support_eps, scope=scope)
    if not rep.finite:
        raise MemoryAdjustError("strategy value is infinite")
    if rep.value <= 0:
        raise MemoryAdjustError("strategy value is already 0")
    return rep


def memory_from_copies(strategy: Strategy, copies: list) -> dict:
    mem = {v: 0 for v in strategy.graph.locations}
    for (v, _), k in zip(strategy.space.states, copies):
        mem[v] += int(k)
    return mem


def adjust_memory(strategy: Strategy, eps: float = DEFAULT_EPS, *, zero_tol: float = ZERO_TOL,
                  support_eps: float = SUPPORT_EPS, scope: str = "bscc"):
    """One AdjustMemory pass: returns ``(new memory assignment, ProfileLedger)``.

    The current assignment is the one ``strategy`` lives on.
    """
    rep = _eligible(strategy, eps, support_eps, scope)
    ledger = profile_ledger(strategy, rep.all_eligible, rep.evaluator, zero_tol, support_eps)
    copies = [ledger.count(c) for c in range(strategy.space.n_states)]
    return memory_from_copies(strategy, copies), ledger


def bounded_copies(ledger: ProfileLedger, n_states: int, bound: int) -> list:
    """Copies per state when at most ``bound`` states are allowed.

    Each state keeps one profile of maximal value; the remaining profiles
    compete for the ``bound - n_states`` extra slots by value, then state
    index, then insertion order.
    """
    if bound < n_states:
        raise MemoryAdjustError(f"bound {bound} is below the current {n_states} states")
    counts = [max(1, ledger.count(c)) for c in range(n_states)]
    if sum(counts) <= bound:
        return counts
    pool = []
    for c in range(n_states):
        items = list(ledger.entries[c].items())
        if not items:
            continue
        top = max(range(len(items)), key=lambda i: (items[i][1], -i))
        for i, (_, val) in enumerate(items):
            if i != top:
                pool.append((-val, c, i))
    pool.sort()
    extra = [0] * n_states
    for _, c, _ in pool[:bound - n_states]:
        extra[c] += 1
    return [1 + e for e in extra]


def adjust_memory_bounded(strategy: Strategy, eps: float = DEFAULT_EPS, bound: int = 300, *,
                          zero_tol: float = ZERO_TOL, support_eps: float = SUPPORT_EPS,
                          scope: str = "bscc", return_copies: bool = False):
    n = strategy.space.n_states
    if bound < n:
        raise MemoryAdjustError(f"bound {bound} is below the current {n} states")
    rep = _eligible(strategy, eps, support_eps, scope)
    ledger = profile_ledger(strategy, rep.all_eligible, rep.evaluator, zero_tol, support_eps)
    copies = bounded_copies(ledger, n, bound)
    mem = memory_from_copies(strategy, copies)
    if return_copies:
        return mem, copies, ledger
    return mem
