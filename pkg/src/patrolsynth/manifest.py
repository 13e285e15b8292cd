"""Batch experiments described by a JSON manifest.

Manifest schema::

    {
      "output": "results",               # optional, relative to the manifest
      "entries": [
        {
          "name": "offices-1",           # optional, defaults to the graph name
          "graph": {"family": "offices", "floors": 1},   # or a graph JSON path
          "memory": ["uniform:1", "deg", "auto"],
          "restarts": 3,
          "timeout": 10,
          "seeds": [0, 1, 2],            # optional, default seed .. seed+restarts-1
          "seed": 0,
          "normalize": "memoryless",     # none | memoryless | eulerian | tsp
          "config": {"eps": 0.25}        # optional SynthesisConfig overrides
        }
      ]
    }

Every entry is validated before anything runs. Runtime failures are
recorded in the summary and the batch moves on.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .baselines import baseline_cycle
from .generators import generate
from .graph import PatrollingGraph, read_graph
from .synth import SynthesisConfig, parse_memory_mode, run_restarts, summarize

NORMALIZATIONS = ("none", "memoryless", "eulerian", "tsp")
RUN_COLUMNS = ["seed", "steps", "epochs", "states", "best_value", "wall_s", "termination"]
SUMMARY_COLUMNS = ["graph", "memory", "runs", "successes", "min", "q1", "median", "q3", "max",
                   "baseline", "norm_min", "norm_q1", "norm_median", "norm_q3", "norm_max",
                   "status", "error"]
TRACE_COLUMNS = ["step", "wall_s", "value", "best_value"]
_CONFIG_FIELDS = {f.name for f in fields(SynthesisConfig)} - {"memory_mode", "seed", "timeout"}


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    name: str
    graph: PatrollingGraph
    memory: list
    restarts: int
    timeout: float
    seeds: list
    normalize: str = "none"
    config: dict = field(default_factory=dict)

    def synthesis_config(self, mode: str) -> SynthesisConfig:
        return SynthesisConfig(memory_mode=mode, timeout=self.timeout, seed=self.seeds[0],
                               **self.config)


@dataclass
class ExperimentManifest:
    entries: list
    output: Path


def _graph(spec, base: Path) -> PatrollingGraph:
    if isinstance(spec, str):
        return read_graph(base / spec)
    if isinstance(spec, dict) and "family" in spec:
        kw = {k: v for k, v in spec.items() if k != "family"}
        try:
            return generate(spec["family"], **kw)
        except TypeError as exc:
            raise ManifestError(f"bad generator arguments {kw}: {exc}") from None
    raise ManifestError("graph must be a path or an object with a 'family' key")


def _entry(doc: dict, base: Path, k: int) -> ManifestEntry:
    where = f"entries[{k}]"
    if not isinstance(doc, dict):
        raise ManifestError(f"{where} must be an object")
    if "graph" not in doc:
        raise ManifestError(f"{where}: missing 'graph'")
    try:
        g = _graph(doc["graph"], base)
    except (OSError, ValueError) as exc:
        raise ManifestError(f"{where}.graph: {exc}") from None
    memory = doc.get("memory", ["auto"])
    if isinstance(memory, str):
        memory = [memory]
    for m in memory:
        try:
            parse_memory_mode(m)
        except ValueError as exc:
            raise ManifestError(f"{where}.memory: {exc}") from None
    restarts = doc.get("restarts", 1)
    if not isinstance(restarts, int) or restarts < 1:
        raise ManifestError(f"{where}.restarts must be a positive integer")
    timeout = doc.get("timeout", 180.0)
    if not isinstance(timeout, (int, float)) or timeout <= 0:
        raise ManifestError(f"{where}.timeout must be positive")
    seed = doc.get("seed", 0)
    seeds = doc.get("seeds", list(range(seed, seed + restarts)))
    if len(seeds) < restarts or not all(isinstance(s, int) for s in seeds):
        raise ManifestError(f"{where}.seeds must list at least {restarts} integers")
    normalize = doc.get("normalize", "none")
    if normalize not in NORMALIZATIONS:
        raise ManifestError(f"{where}.normalize must be one of {', '.join(NORMALIZATIONS)}")
    if normalize == "memoryless" and "uniform:1" not in memory:
        raise ManifestError(f"{where}: memoryless normalization needs 'uniform:1' in memory")
    config = doc.get("config", {})
    unknown = sorted(set(config) - _CONFIG_FIELDS)
    if unknown:
        raise ManifestError(f"{where}.config: unknown fields {unknown}")
    default_name = Path(doc["graph"]).stem if isinstance(doc["graph"], str) else g.name
    entry = ManifestEntry(doc.get("name", default_name), g, list(memory), restarts, float(timeout),
                          list(seeds[:restarts]), normalize, dict(config))
    try:
        for m in memory:
            entry.synthesis_config(m)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"{where}.config: {exc}") from None
    return entry


def load_manifest(path, output=None) -> ExperimentManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return manifest_from_json(doc, path.parent, output)


def manifest_from_json(doc: dict, base=".", output=None) -> ExperimentManifest:
    base = Path(base)
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    entries = doc.get("entries", [])
    if not isinstance(entries, list):
        raise ManifestError("'entries' must be a list")
    parsed = [_entry(e, base, k) for k, e in enumerate(entries)]
    names = [e.name for e in parsed]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ManifestError(f"duplicate entry names {dup}")
    out = Path(output) if output is not None else base / doc.get("output", "results")
    return ExperimentManifest(parsed, out)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else x


def mode_slug(mode: str) -> str:
    return mode.replace(":", "-")


def write_runs(path: Path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in results:
            row = r.row()
            w.writerow([_fmt(row[c]) for c in RUN_COLUMNS])


def write_trace(path: Path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for step, wall, val, best in result.value_trace:
            w.writerow([step, f"{wall:.6f}", repr(float(val)), repr(float(best))])


def _baseline(entry: ManifestEntry, results_by_mode: dict):
    if entry.normalize == "none":
        return None
    if entry.normalize == "memoryless":
        runs = results_by_mode.get("uniform:1") or []
        vals = [r.best_value for r in runs]
        return min(vals) if vals else None
    return baseline_cycle(entry.graph, entry.normalize).value


def run_manifest(manifest: ExperimentManifest, workers: int | None = None) -> list:
    """Execute all entries; returns the summary rows (also written to CSV)."""
    out = manifest.output
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry in manifest.entries:
        d = out / entry.name
        d.mkdir(parents=True, exist_ok=True)
        results_by_mode, errors = {}, {}
        for mode in entry.memory:
            try:
                cfg = entry.synthesis_config(mode)
                results, _ = run_restarts(entry.graph, cfg, entry.restarts,
                                          seeds=entry.seeds, workers=workers)
            except Exception as exc:  # recorded, batch continues
                errors[mode] = f"{type(exc).__name__}: {exc}"
                continue
            results_by_mode[mode] = results
            write_runs(d / f"{mode_slug(mode)}.csv", results)
        try:
            base = _baseline(entry, results_by_mode)
        except Exception as exc:
            base = None
            errors.setdefault("baseline", f"{type(exc).__name__}: {exc}")
        for mode in entry.memory:
            row = {"graph": entry.name, "memory": mode}
            if mode in results_by_mode:
                stats = summarize(results_by_mode[mode], base).to_dict()
                row.update({k: stats[k] for k in SUMMARY_COLUMNS if k in stats})
                row["status"] = "ok"
            else:
                row["runs"], row["successes"] = 0, 0
                row["status"] = "error"
            row["baseline"] = base
            row["error"] = errors.get(mode, errors.get("baseline", ""))
            rows.append(row)
    write_summary(out / "summary.csv", rows)
    return rows


def write_summary(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(_finite_or_none(row.get(c))) for c in SUMMARY_COLUMNS])


def _finite_or_none(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


__all__ = ["ExperimentManifest", "ManifestEntry", "ManifestError", "load_manifest",
           "manifest_from_json", "run_manifest", "write_runs", "write_trace"]
