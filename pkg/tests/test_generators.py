import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patrolsynth.generators import (FAMILIES, gen_airport, gen_building, gen_offices, gen_star,
                                    gen_star_uniform, gen_terrain, generate, line_graph,
                                    office_cycle_length)
from patrolsynth.graph import load_graph
from patrolsynth.oracle import covering_tour_length

HALLS = (3, 4, 5, 7, 9, 12, 15, 19, 25, 30)


def test_offices_one_floor():
    g = gen_offices(1)
    corridors = [v for v in g.locations if v.startswith("C")]
    assert len(corridors) == 4
    ds = {spec.d for spec in g.targets.values()}
    assert ds == {office_cycle_length(1)} == {92}
    assert all(spec.kind == "hard" for spec in g.targets.values())
    assert {g.time("C1.1", "C1.2"), g.time("C1.1", "O1.1a")} == {2, 5}


def test_offices_cycle_length_is_shortest_covering_walk():
    # two offices per corridor: 8 office spurs of 2 * 5 plus the corridor path twice
    assert office_cycle_length(1) == 8 * 10 + 2 * 3 * 2
    g = gen_offices(2)
    assert g.targets["O1.1a"].d == covering_tour_length(g, g.target_ids) == 204


def test_offices_two_floors_have_stairs():
    g1, g2 = gen_offices(1), gen_offices(2)
    assert len(g2.locations) > len(g1.locations)
    stairs = [(u, v) for u, v, t in g2.edges if t == 10]
    assert len(stairs) == 2


def test_offices_max_degree_four():
    g = gen_offices(1)
    assert max(g.out_degree(v) for v in g.locations) == 4


@pytest.mark.parametrize("gen", [gen_offices, gen_building, gen_star, gen_airport])
def test_rejects_zero(gen):
    with pytest.raises(ValueError):
        gen(0)


@pytest.mark.parametrize("floors", [1, 5])
def test_building(floors):
    g = gen_building(floors)
    assert all(s.kind == "blind" and s.beta == 0.9 and s.d == 100 * floors
               for s in g.targets.values())
    o = gen_offices(floors)
    assert g.locations == o.locations and g.edges == o.edges


@pytest.mark.parametrize("halls", HALLS)
def test_airport_sizes(halls):
    g = gen_airport(halls)
    assert len(g.locations) == 3 * halls + 1
    assert len(g.targets) == 2 * halls
    assert all(s.kind == "linear" and s.value_rate == 1.0 for s in g.targets.values())
    for i in range(1, halls + 1):
        assert {f"G{i}a", f"G{i}b"} <= {v for v, _ in g.out_edges[g.index[f"H{i}"]]}


def test_airport_random_values_deterministic():
    a = gen_airport(5, "random", seed=3)
    b = gen_airport(5, "random", seed=3)
    c = gen_airport(5, "random", seed=4)
    assert a.to_json() == b.to_json()
    assert a.to_json() != c.to_json()
    rates = [s.value_rate for s in a.targets.values()]
    assert all(1.0 <= r <= 10.0 for r in rates)


def test_airport_gate_cycle_length():
    g = gen_airport(3)
    assert covering_tour_length(g, g.target_ids) == 10


def test_star_groups():
    g = gen_star(2)
    assert len(g.locations) == 4
    assert [g.targets[v].d for v in ("v1", "v2", "v3")] == [4, 8, 8]
    assert "M" not in g.targets
    assert len(gen_star(3).locations) == 5


def test_star_uniform():
    g = gen_star_uniform(3, 6)
    assert {s.d for s in g.targets.values()} == {6}


@pytest.mark.parametrize("seed", range(5))
def test_terrain_small(seed):
    g = gen_terrain(3, seed)
    assert len(g.targets) == 3
    assert len(g.edges) // 2 in (2, 3)


def test_terrain_33_deterministic():
    a, b = gen_terrain(33, 7), gen_terrain(33, 7)
    assert len(a.locations) == 33
    assert a.dumps() == b.dumps()


@settings(max_examples=100, deadline=None)
@given(n=st.integers(3, 40), seed=st.integers(0, 10_000))
def test_terrain_edge_count_planar(n, seed):
    g = gen_terrain(n, seed)
    m = len(g.edges) // 2
    assert n - 1 <= m <= 3 * n - 6 or (n == 3 and m <= 3)
    assert all(1.0 <= s.value_rate <= 10.0 for s in g.targets.values())


@pytest.mark.parametrize("family, kw", [
    ("line", {}), ("offices", {"floors": 2}), ("building", {"floors": 1}),
    ("airport", {"halls": 4}), ("star", {"groups": 3}), ("star-uniform", {}),
    ("terrain", {"n": 12, "seed": 1}),
])
def test_outputs_validate_and_are_pure(family, kw):
    g = generate(family, **kw)
    assert load_graph(g.dumps()) == g
    assert generate(family, **kw).dumps() == g.dumps()


def test_generate_rejects_unknown():
    with pytest.raises(ValueError, match="unknown family"):
        generate("castle")
    assert "terrain" in FAMILIES


def test_line_graph():
    g = line_graph()
    assert g.target_ids == ["A", "B"]
    assert np.all([t == 1 for _, _, t in g.edges])
