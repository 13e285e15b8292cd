import math

import numpy as np
import pytest

from instances import random_instance
from patrolsynth.baselines import cycle_strategy
from patrolsynth.damage import DamageEvaluator
from patrolsynth.generators import gen_star, line_graph
from patrolsynth.oracle import (Dense, OracleError, OracleReport, best_deterministic,
                                best_deterministic_walk, dense_damage, fd_gradient,
                                path_sum_damage, walk_value)
from patrolsynth.strategy import Strategy, build_state_space
from patrolsynth.value import value


@pytest.mark.parametrize("seed", range(15))
def test_dense_damage_matches_evaluator(seed):
    s = random_instance(400 + seed, n_max=5)
    D = Dense(s)
    sp = s.space
    edges = [(int(sp.src[k]), int(sp.dst[k])) for k in range(sp.n_edges)]
    ev = DamageEvaluator(s)
    for tau in s.graph.target_ids:
        got = ev.values(tau)
        want = dense_damage(D, edges, tau)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_path_enumeration_matches_evaluator(seed):
    s = random_instance(500 + seed, n_max=4, kind="blind", mem_max=1)
    sp = s.space
    ev = DamageEvaluator(s)
    tau = s.graph.target_ids[0]
    for k in range(min(sp.n_edges, 6)):
        try:
            want, _ = path_sum_damage(s, (sp.src[k], sp.dst[k]), tau)
        except OracleError:
            continue
        assert ev.value(k, tau) == pytest.approx(want, abs=1e-12)


def test_path_enumeration_rejects_short_depth():
    s = random_instance(1, kind="hard")
    tau = s.graph.target_ids[0]
    with pytest.raises(OracleError):
        path_sum_damage(s, (0, int(s.space.dst[0])), tau, depth_cap=0)


def test_fd_gradient_on_line():
    g = line_graph()
    s = cycle_strategy(g, ["A", "X", "B", "X"])
    assert np.allclose(fd_gradient(s, (0, 1), "A"), 0.0, atol=1e-12)
    sp = build_state_space(g, {"A": 1, "X": 1, "B": 1})
    p = np.full(sp.n_edges, 0.5)
    for c in (sp.index[("A", 1)], sp.index[("B", 1)]):
        p[sp.row_ptr[c]] = 1.0
    s = Strategy(sp, p)
    e = (sp.index[("X", 1)], sp.index[("B", 1)])
    fd = fd_gradient(s, e, "A")
    assert fd[sp.edge(("X", 1), ("A", 1))] == pytest.approx(-0.25, abs=1e-8)
    assert fd[sp.edge(("X", 1), ("B", 1))] == pytest.approx(0.25, abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_walk_value_matches_cycle_strategy(seed):
    rng = np.random.default_rng(seed)
    s = random_instance(600 + seed, n_max=5)
    g = s.graph
    walk = [g.locations[int(rng.integers(0, len(g.locations)))]]
    for _ in range(int(rng.integers(0, 6))):
        succ = [v for v, _ in g.out_edges[g.index[walk[-1]]]]
        walk.append(succ[int(rng.integers(0, len(succ)))])
    # close the walk along the graph
    while walk[0] not in [v for v, _ in g.out_edges[g.index[walk[-1]]]]:
        succ = [v for v, _ in g.out_edges[g.index[walk[-1]]]]
        walk.append(succ[int(rng.integers(0, len(succ)))])
    got = value(cycle_strategy(g, walk)).value
    want = walk_value(g, walk)
    if math.isinf(want):
        assert math.isinf(got)
    else:
        assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_best_deterministic_line():
    g = line_graph()
    assert best_deterministic(g, 3) == 1.0
    val, walk = best_deterministic_walk(g, 4)
    assert val == 0.0 and len(walk) == 4


def test_best_deterministic_star():
    g = gen_star(2)
    assert best_deterministic(g, 8) == 0.0
    assert best_deterministic(g, 7) > 0.0


def test_report_compare():
    r = OracleReport.compare("value", 0.5, 0.5 + 1e-13, "line")
    assert r.abs_err == pytest.approx(1e-13) and r.rel_err < 1e-12
    assert OracleReport.compare("value", 0.0, 0.0).rel_err == 0.0
