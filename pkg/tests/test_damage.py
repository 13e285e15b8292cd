import math

import numpy as np
import pytest

from instances import gradient_error, random_instance
from patrolsynth.baselines import cycle_strategy
from patrolsynth.damage import (DamageEvaluator, InfiniteDamage, damage_blind, damage_grad,
                                damage_linear)
from patrolsynth.generators import line_graph
from patrolsynth.graph import PatrollingGraph, TargetSpec
from patrolsynth.oracle import Dense, hitting_times, path_sum_damage
from patrolsynth.strategy import Strategy, build_state_space, softmax_pullback


def line_memoryless(p_a):
    g = line_graph()
    sp = build_state_space(g, {"A": 1, "X": 1, "B": 1})
    p = np.zeros(sp.n_edges)
    p[sp.edge(("A", 1), ("X", 1))] = 1.0
    p[sp.edge(("B", 1), ("X", 1))] = 1.0
    p[sp.edge(("X", 1), ("A", 1))] = p_a
    p[sp.edge(("X", 1), ("B", 1))] = 1.0 - p_a
    return Strategy(sp, p)


@pytest.mark.parametrize("p_a", [0.5, 0.2, 0.9])
def test_line_damage_equals_p_b(p_a):
    s = line_memoryless(p_a)
    assert damage_blind(s, (("X", 1), ("B", 1)), "A") == pytest.approx(1.0 - p_a, abs=1e-15)


def test_arrival_at_target_is_caught():
    s = random_instance(2, kind="hard")
    sp = s.space
    ev = DamageEvaluator(s)
    for tau in s.graph.target_ids:
        for k in range(sp.n_edges):
            if sp.states[sp.dst[k]][0] == tau and sp.time[k] <= s.graph.targets[tau].d:
                assert ev.value(k, tau) == 0.0


def two_cycle(beta=0.5, d=5):
    g = PatrollingGraph(("u", "t"), {"t": TargetSpec.blind(d, 1.0, beta)},
                        (("u", "t", 1), ("t", "u", 1)))
    sp = build_state_space(g, {"u": 1, "t": 1})
    return Strategy(sp, np.ones(sp.n_edges))


def test_blind_two_cycle_against_path_enumeration():
    s = two_cycle()
    e = s.space.edge(("t", 1), ("u", 1))
    # visits to t at times 2 and 4 within the budget of 5
    assert damage_blind(s, e, "t") == pytest.approx(0.25, abs=1e-15)
    oracle, _ = path_sum_damage(s, (s.space.src[e], s.space.dst[e]), "t", depth_cap=5)
    assert damage_blind(s, e, "t") == pytest.approx(oracle, abs=1e-15)


def test_survival_bounds_and_beta_monotone():
    prev = None
    for beta in (0.1, 0.4, 0.7, 1.0):
        s = random_instance(9, kind="blind")
        g = s.graph
        targets = {t: TargetSpec.blind(spec.d, spec.alpha, beta) for t, spec in g.targets.items()}
        g2 = PatrollingGraph(g.locations, targets, g.edges)
        s2 = Strategy(build_state_space(g2, s.space.memory), s.p)
        A = DamageEvaluator(s2).matrix()
        alphas = np.array([targets[t].alpha for t in g2.target_ids])[:, None]
        assert np.all(A >= -1e-15) and np.all(A <= alphas + 1e-12)
        if prev is not None:
            assert np.all(A <= prev + 1e-12)
        prev = A


def test_linear_arrival_value_is_edge_time():
    s = random_instance(4, kind="linear", zero_prob=0.0)
    sp = s.space
    ev = DamageEvaluator(s)
    for tau in s.graph.target_ids:
        rate = s.graph.targets[tau].value_rate
        for k in range(sp.n_edges):
            if sp.states[sp.dst[k]][0] == tau:
                assert ev.value(k, tau) == pytest.approx(rate * sp.time[k])


def test_linear_deterministic_cycle():
    locs = ("a", "b", "c")
    g = PatrollingGraph(locs, {"a": TargetSpec.linear(2.5)},
                        (("a", "b", 2), ("b", "c", 3), ("c", "a", 4), ("b", "a", 1)))
    s = cycle_strategy(g, ["a", "b", "c"])
    assert damage_linear(s, (("a", 1), ("b", 1)), "a") == pytest.approx(2.5 * 9)


def three_state_chain():
    g = PatrollingGraph(("a", "b", "c"), {"c": TargetSpec.linear(1.5)},
                        (("a", "b", 1), ("b", "a", 2), ("b", "c", 3), ("c", "a", 1),
                         ("a", "a", 1)))
    sp = build_state_space(g, {"a": 1, "b": 1, "c": 1})
    p = np.zeros(sp.n_edges)
    p[sp.edge(("a", 1), ("b", 1))] = 0.6
    p[sp.edge(("a", 1), ("a", 1))] = 0.4
    p[sp.edge(("b", 1), ("a", 1))] = 0.7
    p[sp.edge(("b", 1), ("c", 1))] = 0.3
    p[sp.edge(("c", 1), ("a", 1))] = 1.0
    return Strategy(sp, p)


def test_linear_chain_dense_and_monte_carlo():
    s = three_state_chain()
    sp = s.space
    e = sp.edge(("c", 1), ("a", 1))
    val = damage_linear(s, e, "c")
    h = hitting_times(Dense(s), "c")
    assert val == pytest.approx(1.5 * (1 + h[0]), rel=1e-12)
    mc, se = path_sum_damage(s, (sp.src[e], sp.dst[e]), "c", samples=1_000_000, seed=1)
    assert abs(mc - val) < 3 * se


def test_hitting_time_residual():
    s = random_instance(21, kind="linear", zero_prob=0.2)
    sp = s.space
    ev = DamageEvaluator(s)
    for tau in s.graph.target_ids:
        tgt = ev._target(tau)
        h = tgt.h
        fin = tgt.finite & ~tgt.at_tau
        for c in np.flatnonzero(fin):
            r = sp.edges_of(int(c))
            rhs = sum(s.p[k] * (sp.time[k] + h[sp.dst[k]]) for k in r if s.p[k] > 0)
            assert abs(h[c] - rhs) < 1e-10


def test_linear_unreachable_is_infinite():
    g = PatrollingGraph(("a", "b"), {"b": TargetSpec.linear(1.0)},
                        (("a", "b", 1), ("b", "a", 1), ("a", "a", 1)))
    sp = build_state_space(g, {"a": 1, "b": 1})
    p = np.zeros(sp.n_edges)
    p[sp.edge(("a", 1), ("a", 1))] = 1.0
    p[sp.edge(("b", 1), ("a", 1))] = 1.0
    s = Strategy(sp, p)
    e = sp.edge(("b", 1), ("a", 1))
    assert math.isinf(damage_linear(s, e, "b"))
    with pytest.raises(InfiniteDamage):
        damage_grad(s, e, "b")


def test_kind_checks():
    s = three_state_chain()
    with pytest.raises(ValueError):
        damage_blind(s, 0, "c")
    with pytest.raises(KeyError):
        damage_linear(s, 0, "a")


def test_line_gradient_through_softmax():
    s = line_memoryless(0.5)
    sp = s.space
    e = sp.edge(("X", 1), ("B", 1))
    q = softmax_pullback(sp, s.p, damage_grad(s, e, "A"))
    assert q[sp.edge(("X", 1), ("A", 1))] == pytest.approx(-0.25, abs=1e-12)
    assert q[sp.edge(("X", 1), ("B", 1))] == pytest.approx(0.25, abs=1e-12)


def test_deterministic_coverage_gradient_prefers_the_path():
    # on the covering 4-cycle, shifting mass from an unused transition onto the
    # walk's own transition never increases any attack value
    g = line_graph()
    s = cycle_strategy(g, ["A", "X", "B", "X"])
    sp = s.space
    ev = DamageEvaluator(s)
    for tau in g.target_ids:
        for k in range(sp.n_edges):
            assert ev.value(k, tau) == 0.0
            raw = ev._target(tau).grad([k], [1.0])
            for c in range(sp.n_states):
                r = list(sp.edges_of(c))
                taken = [j for j in r if s.p[j] > 0]
                for j in r:
                    if s.p[j] == 0:
                        assert raw[taken[0]] - raw[j] <= 1e-15


def test_gradient_matches_finite_differences_sample():
    worst = 0.0
    for seed in range(60):
        s = random_instance(seed)
        rng = np.random.default_rng(seed)
        tau = s.graph.target_ids[int(rng.integers(0, len(s.graph.target_ids)))]
        err = gradient_error(s, int(rng.integers(0, s.space.n_edges)), tau)
        if err is not None:
            worst = max(worst, err)
    assert worst < 1e-4


def test_gradient_zero_off_support():
    s = random_instance(13, zero_prob=0.5)
    ev = DamageEvaluator(s)
    for tau in s.graph.target_ids:
        finite = np.flatnonzero(np.isfinite(ev.values(tau)))
        if len(finite):
            g = ev.grad_p([(int(finite[0]), tau, 1.0)])
            assert np.all(g[s.p <= 0] == 0.0)


def test_edge_locality_under_memory_relabeling():
    s = random_instance(17, mem_max=2)
    sp = s.space
    # swap the two memory values of every location that has two
    perm = {}
    for v, m in sp.memory.items():
        for i in range(1, m + 1):
            perm[(v, i)] = (v, m + 1 - i)
    p2 = np.zeros(sp.n_edges)
    for k in range(sp.n_edges):
        a, b = sp.states[sp.src[k]], sp.states[sp.dst[k]]
        p2[sp.edge(perm[a], perm[b])] = s.p[k]
    s2 = Strategy(sp, p2)
    A, B = DamageEvaluator(s).matrix(), DamageEvaluator(s2).matrix()
    for k in range(sp.n_edges):
        a, b = sp.states[sp.src[k]], sp.states[sp.dst[k]]
        k2 = sp.edge(perm[a], perm[b])
        assert np.allclose(A[:, k], B[:, k2], rtol=1e-12, atol=1e-12, equal_nan=True)
