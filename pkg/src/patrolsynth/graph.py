"""Patrolling graph data model and its JSON file format.

A patrolling graph is a directed graph of locations with integer traversal
times. Some locations are targets, each carrying one of three attack models:

``hard``
    The attack takes ``d`` time units; the Attacker gains ``alpha`` unless
    the Defender visits the target within ``d`` units.
``blind``
    Like ``hard``, but each visit discovers the ongoing attack only with
    probability ``beta``.
``linear``
    Damage accrues at ``value_rate`` per time unit until the first visit.

JSON layout::

    {"locations": [{"id": "A", "target": {"kind": "hard", "d": 4, "alpha": 1.0}},
                   {"id": "X"}],
     "edges": [{"from": "A", "to": "X", "time": 1}, ...]}

Edges are directed; undirected inputs list both directions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable

HARD = "hard"
BLIND = "blind"
LINEAR = "linear"
KINDS = (HARD, BLIND, LINEAR)

_FIELDS = {
    HARD: {"d", "alpha"},
    BLIND: {"d", "alpha", "beta"},
    LINEAR: {"value_rate"},
}


class GraphError(ValueError):
    """Raised when a graph (or a file describing one) violates an invariant."""


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    d: int | None = None
    alpha: float | None = None
    beta: float | None = None
    value_rate: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"unknown target kind {self.kind!r}")
        present = {n for n in ("d", "alpha", "beta", "value_rate")
                   if getattr(self, n) is not None}
        if present != _FIELDS[self.kind]:
            raise GraphError(
                f"{self.kind} target needs exactly {sorted(_FIELDS[self.kind])}, "
                f"got {sorted(present)}")
        if self.kind in (HARD, BLIND):
            if int(self.d) != self.d or self.d < 1:
                raise GraphError(f"attack duration d must be a positive integer, got {self.d}")
            if not (self.alpha >= 0 and math.isfinite(self.alpha)):
                raise GraphError(f"cost alpha must be finite and >= 0, got {self.alpha}")
        if self.kind == BLIND and not (0 < self.beta <= 1):
            raise GraphError(f"discovery probability beta must be in (0, 1], got {self.beta}")
        if self.kind == LINEAR and not (self.value_rate > 0 and math.isfinite(self.value_rate)):
            raise GraphError(f"value_rate must be finite and > 0, got {self.value_rate}")

    @classmethod
    def hard(cls, d: int, alpha: float = 1.0) -> "TargetSpec":
        return cls(HARD, d=int(d), alpha=float(alpha))

    @classmethod
    def blind(cls, d: int, alpha: float, beta: float) -> "TargetSpec":
        return cls(BLIND, d=int(d), alpha=float(alpha), beta=float(beta))

    @classmethod
    def linear(cls, value_rate: float) -> "TargetSpec":
        return cls(LINEAR, value_rate=float(value_rate))

    @property
    def discovery(self) -> float:
        """Per-visit discovery probability; hard targets always discover."""
        return 1.0 if self.kind == HARD else float(self.beta)

    @property
    def bounded(self) -> bool:
        return self.kind != LINEAR

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for name in sorted(_FIELDS[self.kind]):
            out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class PatrollingGraph:
    """Immutable patrolling graph. Construction validates every invariant."""

    locations: tuple[str, ...]
    targets: dict[str, TargetSpec]
    edges: tuple[tuple[str, str, int], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "edges", tuple((u, v, t) for u, v, t in self.edges))
        object.__setattr__(self, "targets", dict(self.targets))
        self._validate()

    def _validate(self):
        if not self.locations:
            raise GraphError("locations must be non-empty")
        if len(set(self.locations)) != len(self.locations):
            raise GraphError("duplicate location id")
        if not self.targets:
            raise GraphError("targets must be non-empty")
        known = set(self.locations)
        for tid in self.targets:
            if tid not in known:
                raise GraphError(f"target {tid!r} is not a location")
        seen = set()
        for u, v, t in self.edges:
            if u not in known or v not in known:
                raise GraphError(f"edge ({u!r}, {v!r}) references an unknown location")
            if isinstance(t, bool) or int(t) != t or t < 1:
                raise GraphError(f"edge ({u!r}, {v!r}) has time {t!r}; times must be integers >= 1")
            if (u, v) in seen:
                raise GraphError(f"duplicate edge ({u!r}, {v!r})")
            seen.add((u, v))
        if not _strongly_connected(len(self.locations), [
                (self.index[u], self.index[v]) for u, v, _ in self.edges]):
            raise GraphError("graph is not strongly connected")

    @cached_property
    def index(self) -> dict[str, int]:
        return {loc: i for i, loc in enumerate(self.locations)}

    @cached_property
    def out_edges(self) -> tuple[tuple[tuple[str, int], ...], ...]:
        """Per location index: ((successor id, time), ...) in edge-list order."""
        succ = [[] for _ in self.locations]
        for u, v, t in self.edges:
            succ[self.index[u]].append((v, int(t)))
        return tuple(tuple(s) for s in succ)

    def out_degree(self, loc: str) -> int:
        return len(self.out_edges[self.index[loc]])

    def time(self, u: str, v: str) -> int:
        for w, t in self.out_edges[self.index[u]]:
            if w == v:
                return t
        raise KeyError((u, v))

    @property
    def target_ids(self) -> list[str]:
        """Targets in location order."""
        return [v for v in self.locations if v in self.targets]

    @property
    def max_alpha(self) -> float:
        return max((s.alpha for s in self.targets.values() if s.bounded), default=0.0)

    def to_json(self) -> dict:
        locs = []
        for v in self.locations:
            entry = {"id": v}
            if v in self.targets:
                entry["target"] = self.targets[v].to_json()
            locs.append(entry)
        return {
            "locations": locs,
            "edges": [{"from": u, "to": v, "time": int(t)} for u, v, t in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _strongly_connected(n: int, arcs: Iterable[tuple[int, int]]) -> bool:
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for a, b in arcs:
        fwd[a].append(b)
        bwd[b].append(a)
    for adj in (fwd, bwd):
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != n:
            return False
    return True


def undirected(pairs: Iterable[tuple[str, str, int]]) -> list[tuple[str, str, int]]:
    """Both directions of each (u, v, time) pair."""
    out = []
    for u, v, t in pairs:
        out.append((u, v, t))
        if u != v:
            out.append((v, u, t))
    return out


def graph_from_json(doc: dict, name: str = "") -> PatrollingGraph:
    if not isinstance(doc, dict):
        raise GraphError("graph document must be a JSON object")
    for key in ("locations", "edges"):
        if key not in doc or not isinstance(doc[key], list):
            raise GraphError(f"missing list field {key!r}")
    locations, targets = [], {}
    for i, entry in enumerate(doc["locations"]):
        if not isinstance(entry, dict) or "id" not in entry:
            raise GraphError(f"locations[{i}]: expected an object with an 'id'")
        loc = str(entry["id"])
        locations.append(loc)
        if entry.get("target") is not None:
            spec = dict(entry["target"])
            kind = spec.pop("kind", None)
            try:
                targets[loc] = TargetSpec(kind, **spec)
            except TypeError as exc:
                raise GraphError(f"locations[{i}].target: {exc}") from None
            except GraphError as exc:
                raise GraphError(f"locations[{i}].target: {exc}") from None
    edges = []
    for i, entry in enumerate(doc["edges"]):
        try:
            edges.append((str(entry["from"]), str(entry["to"]), entry["time"]))
        except (KeyError, TypeError):
            raise GraphError(f"edges[{i}]: expected an object with 'from', 'to', 'time'") from None
    return PatrollingGraph(tuple(locations), targets, tuple(edges), name=name)


def load_graph(source: str | bytes | IO) -> PatrollingGraph:
    """Parse and validate a graph from JSON text, bytes or a readable stream."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise GraphError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return graph_from_json(doc)


def read_graph(path) -> PatrollingGraph:
    with open(path, "rb") as fh:
        g = load_graph(fh)
    object.__setattr__(g, "name", str(path))
    return g
