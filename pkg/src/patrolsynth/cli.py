"""Command-line interface: ``patrolsynth <command> ...``.

Exit codes: 0 success, 1 invalid input (bad flags, files, graphs, strategies),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .baselines import METHODS, BaselineError, baseline_cycle
from .generators import FAMILIES, generate
from .graph import GraphError, read_graph
from .manifest import ManifestError, load_manifest, run_manifest, write_runs, write_trace
from .memory import MemoryAdjustError, adjust_memory, adjust_memory_bounded
from .strategy import StrategyError, expand_strategy, strategy_from_json
from .synth import SynthesisConfig, run_restarts
from .value import DEFAULT_EPS, value

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _num(x):
    """JSON-safe values: non-finite floats become strings, recursively."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _emit(args, doc: dict, text: str):
    if args.json:
        print(json.dumps(_num(doc), indent=1))
    else:
        print(text)


def _write_json(path, doc):
    text = json.dumps(doc, indent=1)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _load_strategy(args):
    g = read_graph(args.graph)
    return g, strategy_from_json(_read_json(args.strategy), g)


def _attack_doc(strategy, att):
    sp = strategy.space
    a, b = sp.src[att.edge], sp.dst[att.edge]
    return {"from": list(sp.states[a]), "to": list(sp.states[b]), "target": att.target,
            "damage": _num(att.value)}


# -- commands ----------------------------------------------------------------

def cmd_generate(args):
    kw = {}
    if args.family in ("offices", "building"):
        kw["floors"] = args.floors
    elif args.family == "airport":
        kw.update(halls=args.halls, value_mode=args.values, seed=args.seed)
    elif args.family == "star":
        kw["groups"] = args.groups
    elif args.family == "star-uniform":
        kw.update(leaves=args.leaves, d=args.d or 6)
    elif args.family == "terrain":
        kw.update(n=args.n, seed=args.seed)
    elif args.family == "line":
        kw["d"] = args.d or 4
    g = generate(args.family, **kw)
    _write_json(args.output, g.to_json())
    if args.output not in (None, "-") and args.json:
        print(json.dumps({"graph": args.output, "locations": len(g.locations),
                          "targets": len(g.targets), "edges": len(g.edges)}))
    return EXIT_OK


def cmd_evaluate(args):
    g, strat = _load_strategy(args)
    rep = value(strat, eps=args.eps, scope=args.scope)
    doc = {"value": _num(rep.value), "bscc_size": len(rep.best_bscc),
           "bscc_count": len(rep.components), "witness": _attack_doc(strat, rep.witness),
           "eligible": len(rep.all_eligible)}
    w = doc["witness"]
    text = (f"value      {rep.value:.10g}\n"
            f"best bscc  {len(rep.best_bscc)} states ({len(rep.components)} bottom components)\n"
            f"witness    {w['from']} -> {w['to']} attacking {w['target']}: {rep.witness.value:.10g}\n"
            f"eligible   {len(rep.all_eligible)} attacks")
    _emit(args, doc, text)
    return EXIT_OK


def cmd_adjust_memory(args):
    g, strat = _load_strategy(args)
    if args.bound is None:
        mem, ledger = adjust_memory(strat, args.eps)
    else:
        mem, _, ledger = adjust_memory_bounded(strat, args.eps, args.bound, return_copies=True)
    sp = strat.space
    profiles = {sp.label(c): ledger.count(c) for c in range(sp.n_states)}
    if args.output:
        Path(args.output).write_text(json.dumps(mem, indent=1) + "\n")
    if args.json:
        print(json.dumps({"memory": mem, "eligible": ledger.n_attacks, "profiles": profiles},
                         indent=1))
    else:
        print(json.dumps(mem))
        print(f"# {ledger.n_attacks} eligible attacks; distinct profiles per state:",
              file=sys.stderr)
        for label, k in profiles.items():
            print(f"#   {label}: {k}", file=sys.stderr)
    return EXIT_OK


def _copies(doc, strat):
    """Copies per state from ``{"loc": [k1, k2, ...]}`` (one count per memory index)."""
    sp = strat.space
    if not isinstance(doc, dict):
        raise UsageError("copies file must map locations to lists of counts")
    out = {s: 1 for s in sp.states}
    for loc, counts in doc.items():
        if loc not in sp.memory:
            raise UsageError(f"copies: unknown location {loc!r}")
        if isinstance(counts, int):
            counts = [counts] * sp.memory[loc]
        if len(counts) != sp.memory[loc]:
            raise UsageError(f"copies: {loc} has memory {sp.memory[loc]}, got {len(counts)} counts")
        for i, k in enumerate(counts, start=1):
            out[(loc, i)] = int(k)
    return out


def cmd_expand(args):
    g, strat = _load_strategy(args)
    expanded = expand_strategy(strat, _copies(_read_json(args.copies), strat))
    _write_json(args.output, expanded.to_json())
    if args.json and args.output not in (None, "-"):
        print(json.dumps({"strategy": args.output, "memory": expanded.space.memory}))
    return EXIT_OK


def cmd_baseline(args):
    g = read_graph(args.graph)
    b = baseline_cycle(g, args.method)
    if args.output:
        Path(args.output).write_text(b.strategy.dumps() + "\n")
    doc = {"method": b.method, "walk": b.walk, "length": b.length, "value": _num(b.value),
           "states": b.strategy.space.n_states}
    _emit(args, doc, f"{b.method} cycle of length {b.length} ({len(b.walk)} steps), "
                     f"value {b.value:.10g}")
    return EXIT_OK


def cmd_synthesize(args):
    g = read_graph(args.graph)
    cfg = SynthesisConfig(memory_mode=args.memory, state_bound=args.bound, eps=args.eps,
                          timeout=args.timeout, warm=args.warm, seed=args.seed,
                          polish=not args.no_polish)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    results, summary = run_restarts(g, cfg, args.restarts, workers=args.workers)
    write_runs(out / "runs.csv", results)
    for r in results:
        write_trace(out / f"trace_seed{r.seed}.csv", r)
    best = min(results, key=lambda r: (r.best_value, r.seed))
    if best.best_strategy is not None:
        (out / "best_strategy.json").write_text(best.best_strategy.dumps() + "\n")
    doc = {"output": str(out), "best_seed": best.seed, "best_value": _num(best.best_value),
           "summary": {k: _num(v) for k, v in summary.to_dict().items()}}
    text = "\n".join(
        [f"seed {r.seed}: value {r.best_value:.6g} after {r.steps} steps, "
         f"{r.epochs} epochs, {r.states} states ({r.termination})" for r in results]
        + [f"best value {best.best_value:.6g} (seed {best.seed}); files in {out}"])
    _emit(args, doc, text)
    return EXIT_OK


def cmd_batch(args):
    manifest = load_manifest(args.manifest, output=args.output)
    rows = run_manifest(manifest, workers=args.workers)
    if args.json:
        print(json.dumps(_num(rows), indent=1))
    else:
        for r in rows:
            med = r.get("median")
            med = f"{med:.6g}" if isinstance(med, float) else "-"
            print(f"{r['graph']:<24} {r['memory']:<12} runs {r['runs']:<3} "
                  f"successes {r['successes']:<3} median {med} {r['status']}")
        print(f"summary written to {manifest.output / 'summary.csv'}")
    return EXIT_OK


def cmd_oracle(args):
    from . import oracle

    g = read_graph(args.graph)
    if args.oracle_cmd == "best-deterministic":
        val, walk = oracle.best_deterministic_walk(g, args.bound)
        _emit(args, {"value": _num(val), "walk": walk}, f"value {val:.10g} via walk {walk}")
        return EXIT_OK
    strat = strategy_from_json(_read_json(args.strategy), g)
    if args.oracle_cmd == "value":
        brute = oracle.brute_value(strat)
        fast = value(strat).value
        _emit(args, {"brute_value": _num(brute), "value": _num(fast)},
              f"brute force {brute:.12g}\nbscc value  {fast:.12g}")
        return EXIT_OK
    # gradient: compare reverse-mode and finite-difference gradients everywhere
    from .damage import DamageEvaluator
    from .strategy import softmax_pullback

    ev = DamageEvaluator(strat)
    sp = strat.space
    worst = 0.0
    for tau in g.target_ids:
        for e in range(sp.n_edges):
            if not math.isfinite(ev.value(e, tau)):
                continue
            fd = oracle.fd_gradient(strat, (int(sp.src[e]), int(sp.dst[e])), tau, step=args.step)
            exact = softmax_pullback(sp, strat.p, ev.grad_p([(e, tau, 1.0)]))
            scale = max(1.0, float(abs(fd).max()))
            worst = max(worst, float(abs(fd - exact).max()) / scale)
    _emit(args, {"max_rel_error": worst}, f"max relative gradient error {worst:.3g}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="patrolsynth", description="Patrolling strategy synthesis with "
                "automatic memory assignment.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def command(name, func, help):
        sp = sub.add_parser(name, help=help, description=help)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.set_defaults(func=func)
        return sp

    def graph_and_strategy(sp):
        sp.add_argument("--graph", required=True, help="graph JSON file")
        sp.add_argument("--strategy", required=True, help="strategy JSON file")

    s = command("generate", cmd_generate, "write a benchmark graph")
    s.add_argument("family", choices=FAMILIES)
    s.add_argument("--floors", type=int, default=1)
    s.add_argument("--halls", type=int, default=3)
    s.add_argument("--groups", type=int, default=2)
    s.add_argument("--leaves", type=int, default=3)
    s.add_argument("--d", type=int, default=None, help="attack length (line, star-uniform)")
    s.add_argument("--n", type=int, default=20, help="terrain size")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--values", choices=("uniform", "random"), default="uniform")
    s.add_argument("-o", "--output", default=None, help="output file (default stdout)")

    s = command("evaluate", cmd_evaluate, "game value of a strategy")
    graph_and_strategy(s)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--scope", choices=("bscc", "all"), default="bscc")

    s = command("adjust-memory", cmd_adjust_memory, "memory assignment from attack profiles")
    graph_and_strategy(s)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--bound", type=int, default=None, help="maximal number of states")
    s.add_argument("-o", "--output", default=None, help="also write the assignment here")

    s = command("expand", cmd_expand, "value-preserving state expansion")
    graph_and_strategy(s)
    s.add_argument("--copies", required=True,
                   help='JSON mapping locations to copies per memory index, e.g. {"X": [2]}')
    s.add_argument("-o", "--output", default=None)

    s = command("baseline", cmd_baseline, "deterministic cycle baseline")
    s.add_argument("--graph", required=True)
    s.add_argument("--method", choices=METHODS, default="tsp")
    s.add_argument("-o", "--output", default=None, help="write the cycle strategy here")

    s = command("synthesize", cmd_synthesize, "optimize strategies over seeded restarts")
    s.add_argument("--graph", required=True)
    s.add_argument("--memory", default="auto", help="auto, deg or uniform:K")
    s.add_argument("--bound", type=int, default=300)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--timeout", type=float, default=180.0)
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--warm", action="store_true", help="warm-start epochs by expansion")
    s.add_argument("--no-polish", action="store_true", help="skip the final pruning pass")
    s.add_argument("-o", "--output", required=True, help="output directory")

    s = command("batch", cmd_batch, "run an experiment manifest")
    s.add_argument("manifest")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("-o", "--output", default=None, help="override the manifest output dir")

    o = sub.add_parser("oracle", help="brute-force checks on small instances")
    osub = o.add_subparsers(dest="oracle_cmd", required=True, parser_class=_Parser)
    for name, help in (("value", "compare the value with exhaustive attack enumeration"),
                       ("gradient", "compare damage gradients with finite differences"),
                       ("best-deterministic", "exhaustive deterministic strategy search")):
        s = osub.add_parser(name, help=help, description=help)
        s.add_argument("--json", action="store_true")
        s.add_argument("--graph", required=True)
        if name == "best-deterministic":
            s.add_argument("--bound", type=int, required=True)
        else:
            s.add_argument("--strategy", required=True)
        if name == "gradient":
            s.add_argument("--step", type=float, default=1e-6)
        s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, GraphError, StrategyError, ManifestError, BaselineError,
            MemoryAdjustError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"patrolsynth: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"patrolsynth: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"patrolsynth: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
