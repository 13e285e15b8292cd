"""Benchmark patrolling graphs: Offices, Building, Airports, Stars, Terrains.

All generators are pure functions of their arguments. Layout choices the
benchmark descriptions leave open:

Offices / Building
    Each floor is a path of 4 corridors (time 2 between neighbours); every
    corridor serves two offices (time 5). Staircases (time 10) join the
    first corridors of adjacent floors. The building is a tree whose inner
    corridors have degree 4.
Airports
    Entrance ``E``, halls ``H1..Hn`` split into three terminals, and two
    gates per hall. Halls of a terminal form a corridor starting at ``E``.
    An apron ``E - G1a - H1 - G1b - G2a - ... - Gnb - E`` (all unit times)
    lets a patrol pass every gate once in ``3n + 1`` steps.
Terrains
    Edge times are Euclidean distances times 100, rounded, at least 1.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay, QhullError

from .graph import PatrollingGraph, TargetSpec, undirected

FAMILIES = ("line", "offices", "building", "airport", "star", "star-uniform", "terrain")

CORRIDORS_PER_FLOOR = 4
OFFICES_PER_CORRIDOR = 2
CORRIDOR_TIME = 2
OFFICE_TIME = 5
STAIRS_TIME = 10


def _need(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def line_graph(d: int = 4, alpha: float = 1.0) -> PatrollingGraph:
    """Two hard targets A, B joined through X, unit times."""
    return PatrollingGraph(
        ("A", "X", "B"),
        {"A": TargetSpec.hard(d, alpha), "B": TargetSpec.hard(d, alpha)},
        tuple(undirected([("A", "X", 1), ("X", "B", 1)])),
        name=f"line-d{d}")


def _office_layout(floors: int):
    locs, pairs, offices = [], [], []
    for f in range(1, floors + 1):
        for i in range(1, CORRIDORS_PER_FLOOR + 1):
            c = f"C{f}.{i}"
            locs.append(c)
            if i > 1:
                pairs.append((f"C{f}.{i - 1}", c, CORRIDOR_TIME))
            for o in "ab"[:OFFICES_PER_CORRIDOR]:
                office = f"O{f}.{i}{o}"
                locs.append(office)
                offices.append(office)
                pairs.append((c, office, OFFICE_TIME))
        if f > 1:
            pairs.append((f"C{f - 1}.1", f"C{f}.1", STAIRS_TIME))
    return locs, pairs, offices


def office_cycle_length(floors: int) -> int:
    """Length of the shortest closed walk visiting every office."""
    from .oracle import covering_tour_length

    locs, pairs, offices = _office_layout(floors)
    probe = PatrollingGraph(tuple(locs), {o: TargetSpec.hard(1) for o in offices},
                            tuple(undirected(pairs)))
    return covering_tour_length(probe, offices)


def gen_offices(floors: int, alpha: float = 1.0) -> PatrollingGraph:
    _need(floors >= 1, f"floors must be >= 1, got {floors}")
    locs, pairs, offices = _office_layout(floors)
    d = office_cycle_length(floors)
    return PatrollingGraph(tuple(locs), {o: TargetSpec.hard(d, alpha) for o in offices},
                           tuple(undirected(pairs)), name=f"offices-{floors}")


def gen_building(floors: int, alpha: float = 1.0, beta: float = 0.9) -> PatrollingGraph:
    _need(floors >= 1, f"floors must be >= 1, got {floors}")
    locs, pairs, offices = _office_layout(floors)
    d = 100 * floors
    return PatrollingGraph(tuple(locs), {o: TargetSpec.blind(d, alpha, beta) for o in offices},
                           tuple(undirected(pairs)), name=f"building-{floors}")


def _terminals(halls: int) -> list[list[int]]:
    sizes = [halls // 3 + (1 if t < halls % 3 else 0) for t in range(3)]
    out, start = [], 1
    for s in sizes:
        out.append(list(range(start, start + s)))
        start += s
    return out


def gen_airport(halls: int, value_mode: str = "uniform", seed: int = 0) -> PatrollingGraph:
    """Airport with ``3 * halls + 1`` locations and ``2 * halls`` linear gates.

    ``value_mode`` is ``"uniform"`` (all rates 1) or ``"random"`` (rates drawn
    independently from U[1, 10] with ``seed``).
    """
    _need(halls >= 1, f"halls must be >= 1, got {halls}")
    _need(value_mode in ("uniform", "random"), f"unknown value mode {value_mode!r}")
    locs = ["E"]
    pairs = []
    gates = []
    for i in range(1, halls + 1):
        locs += [f"H{i}", f"G{i}a", f"G{i}b"]
        gates += [f"G{i}a", f"G{i}b"]
        pairs += [(f"H{i}", f"G{i}a", 1), (f"H{i}", f"G{i}b", 1)]
    for term in _terminals(halls):
        if term:
            pairs.append(("E", f"H{term[0]}", 1))
            pairs += [(f"H{a}", f"H{b}", 1) for a, b in zip(term, term[1:])]
    apron = [("E", "G1a", 1)] + [(f"G{i}b", f"G{i + 1}a", 1) for i in range(1, halls)]
    apron.append((f"G{halls}b", "E", 1))
    pairs += apron
    if value_mode == "uniform":
        rates = [1.0] * len(gates)
    else:
        rates = np.random.default_rng(seed).uniform(1.0, 10.0, size=len(gates)).tolist()
    targets = {gt: TargetSpec.linear(r) for gt, r in zip(gates, rates)}
    return PatrollingGraph(tuple(locs), targets, tuple(undirected(pairs)),
                           name=f"airport-{halls}-{value_mode}")


def gen_star(groups: int, alpha: float = 1.0) -> PatrollingGraph:
    """Star S_{k+1}: centre M, leaves v1..v(k+1); d(v1) = 4, others 4k."""
    _need(groups >= 1, f"groups must be >= 1, got {groups}")
    k = groups
    leaves = [f"v{i}" for i in range(1, k + 2)]
    targets = {v: TargetSpec.hard(4 if i == 0 else 4 * k, alpha) for i, v in enumerate(leaves)}
    return PatrollingGraph(tuple(["M"] + leaves), targets,
                           tuple(undirected([("M", v, 1) for v in leaves])), name=f"star-{k}")


def gen_star_uniform(leaves: int = 3, d: int = 6, alpha: float = 1.0) -> PatrollingGraph:
    """Star with ``leaves`` hard targets of equal attack length ``d``."""
    _need(leaves >= 1, f"leaves must be >= 1, got {leaves}")
    names = [f"v{i}" for i in range(1, leaves + 1)]
    return PatrollingGraph(tuple(["M"] + names), {v: TargetSpec.hard(d, alpha) for v in names},
                           tuple(undirected([("M", v, 1) for v in names])),
                           name=f"star-uniform-{leaves}-d{d}")


def terrain_points(n: int, seed: int):
    """Points and Delaunay triangulation used by :func:`gen_terrain`."""
    rng = np.random.default_rng(seed)
    for _ in range(100):
        pts = rng.uniform(0.0, 1.0, size=(n, 2))
        try:
            tri = Delaunay(pts)
        except QhullError:
            continue
        if len(tri.simplices):
            return pts, tri, rng
    raise ValueError(f"could not triangulate {n} points")


def gen_terrain(n: int, seed: int = 0, scale: float = 100.0) -> PatrollingGraph:
    _need(n >= 3, f"terrain needs n >= 3, got {n}")
    pts, tri, rng = terrain_points(n, seed)
    tri_edges = set()
    for simplex in tri.simplices:
        for a in range(3):
            u, v = sorted((int(simplex[a]), int(simplex[(a + 1) % 3])))
            tri_edges.add((u, v))
    tri_edges = sorted(tri_edges)
    dist = {e: float(np.hypot(*(pts[e[0]] - pts[e[1]]))) for e in tri_edges}
    rows, cols = zip(*tri_edges)
    # csgraph treats explicit zeros as missing; coincident points are not expected
    w = coo_matrix(([max(dist[e], 1e-12) for e in tri_edges], (rows, cols)), shape=(n, n))
    mst = minimum_spanning_tree(w).tocoo()
    chosen = {tuple(sorted((int(a), int(b)))) for a, b in zip(mst.row, mst.col)}
    for e in tri_edges:
        if e not in chosen and rng.random() < 0.5:
            chosen.add(e)
    rates = rng.uniform(1.0, 10.0, size=n)
    names = [f"P{i}" for i in range(n)]
    pairs = [(names[u], names[v], max(1, int(round(scale * dist[(u, v)]))))
             for u, v in sorted(chosen)]
    return PatrollingGraph(tuple(names), {names[i]: TargetSpec.linear(rates[i]) for i in range(n)},
                           tuple(undirected(pairs)), name=f"terrain-{n}-s{seed}")


def generate(family: str, **kw) -> PatrollingGraph:
    """Dispatch by family name; unknown keyword arguments are rejected."""
    table = {
        "line": line_graph,
        "offices": gen_offices,
        "building": gen_building,
        "airport": gen_airport,
        "star": gen_star,
        "star-uniform": gen_star_uniform,
        "terrain": gen_terrain,
    }
    if family not in table:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    return table[family](**kw)
