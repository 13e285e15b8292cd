import math

import numpy as np
import pytest

from instances import random_instance
from patrolsynth.damage import DamageEvaluator
from patrolsynth.generators import line_graph
from patrolsynth.graph import PatrollingGraph, TargetSpec
from patrolsynth.memory import (MemoryAdjustError, ProfileLedger, adjust_memory,
                                adjust_memory_bounded, attack_profile, bounded_copies)
from patrolsynth.strategy import Strategy, build_state_space
from patrolsynth.value import value


def line_uniform():
    g = line_graph()
    sp = build_state_space(g, {"A": 1, "X": 1, "B": 1})
    p = np.zeros(sp.n_edges)
    for c in range(sp.n_states):
        r = sp.edges_of(c)
        p[r.start:r.stop] = 1.0 / len(r)
    return Strategy(sp, p)


def test_line_profiles_split_the_junction():
    s = line_uniform()
    sp = s.space
    x = sp.index[("X", 1)]
    rep = value(s)
    profiles = {attack_profile(s, a, x).signs for a in rep.all_eligible}
    # out-edges of X are ordered A, B
    assert profiles == {(-1, 1), (1, -1)}
    mem, ledger = adjust_memory(s)
    assert mem == {"A": 1, "X": 2, "B": 1}
    assert ledger.count(x) == 2


def test_single_edge_state_has_zero_profile():
    s = line_uniform()
    a = s.space.index[("A", 1)]
    for att in value(s).all_eligible:
        assert attack_profile(s, att, a).signs == (0,)


def test_bounded_passthrough_and_tight_bound():
    s = line_uniform()
    assert adjust_memory_bounded(s, bound=100) == adjust_memory(s)[0]
    assert adjust_memory_bounded(s, bound=3) == {"A": 1, "X": 1, "B": 1}
    with pytest.raises(MemoryAdjustError):
        adjust_memory_bounded(s, bound=2)


def reference_bounded(entries, bound):
    """Independent sort-based selection used to cross-check ``bounded_copies``."""
    n = len(entries)
    keep = [1] * n
    rest = []
    for c, prof in enumerate(entries):
        ranked = sorted(enumerate(prof.values()), key=lambda iv: (-iv[1], iv[0]))
        rest += [(-v, c, i) for i, v in ranked[1:]]
    for _, c, _ in sorted(rest)[:max(0, bound - n)]:
        keep[c] += 1
    return keep


def test_bounded_hand_example():
    entries = [
        {("a",): 5.0, ("b",): 3.0, ("c",): 1.0},
        {("a",): 4.0, ("b",): 2.0},
    ]
    ledger = ProfileLedger(entries, 5)
    # |C| + 2 slots: the extras go to value 3 (state 0) and value 2 (state 1)
    assert bounded_copies(ledger, 2, 4) == [2, 2]
    assert bounded_copies(ledger, 2, 4) == reference_bounded(entries, 4)
    assert bounded_copies(ledger, 2, 3) == [2, 1]
    assert bounded_copies(ledger, 2, 10) == [3, 2]


def test_bounded_matches_reference_on_random_ledgers():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        entries = [{(j,): float(rng.integers(1, 5)) for j in range(int(rng.integers(1, 4)))}
                   for _ in range(n)]
        total = sum(len(e) for e in entries)
        bound = int(rng.integers(n, total + 2))
        got = bounded_copies(ProfileLedger(entries, 0), n, bound)
        assert got == reference_bounded(entries, bound)
        assert sum(got) <= max(bound, n)


def scaled(s, factor):
    g = s.graph
    targets = {t: TargetSpec(spec.kind, d=spec.d, alpha=spec.alpha * factor, beta=spec.beta)
               if spec.bounded else TargetSpec.linear(spec.value_rate * factor)
               for t, spec in g.targets.items()}
    g2 = PatrollingGraph(g.locations, targets, g.edges)
    return Strategy(build_state_space(g2, s.space.memory), s.p)


@pytest.mark.parametrize("seed", range(8))
def test_profiles_are_scale_invariant(seed):
    s = random_instance(300 + seed, zero_prob=0.0)
    rep = value(s)
    if not rep.finite or rep.value == 0:
        pytest.skip("degenerate value")
    assert adjust_memory(s)[0] == adjust_memory(scaled(s, 7.5))[0]


def test_zero_value_is_rejected():
    g = PatrollingGraph(("T",), {"T": TargetSpec.hard(1)}, (("T", "T", 1),))
    s = Strategy(build_state_space(g, {"T": 1}), np.ones(1))
    assert value(s).value == 0.0
    with pytest.raises(MemoryAdjustError, match="already 0"):
        adjust_memory(s)


def test_infinite_value_is_rejected():
    g = PatrollingGraph(("a", "b"), {"b": TargetSpec.linear(1.0)},
                        (("a", "b", 1), ("b", "a", 1), ("a", "a", 1)))
    sp = build_state_space(g, {"a": 1, "b": 1})
    p = np.zeros(sp.n_edges)
    p[sp.edge(("a", 1), ("a", 1))] = 1.0
    p[sp.edge(("b", 1), ("a", 1))] = 1.0
    s = Strategy(sp, p)
    assert math.isinf(value(s).value)
    with pytest.raises(MemoryAdjustError, match="infinite"):
        adjust_memory(s)
    att = DamageEvaluator(s).attack(sp.edge(("a", 1), ("a", 1)), "b")
    with pytest.raises(MemoryAdjustError):
        attack_profile(s, att, 0)
