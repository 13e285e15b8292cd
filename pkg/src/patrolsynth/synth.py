"""Synthesis driver: gradient optimization alternated with memory adjustment.

A run is a sequence of optimizer steps split into epochs; an epoch keeps the
memory assignment fixed. In ``auto`` mode a run starts memoryless and, each
time an epoch plateaus after improving the value by at least 5 %, the memory
is recomputed from attack profiles and the optimizer restarts on the new
state space.

Termination rules per run: wall-clock timeout, value below ``value_floor``,
an epoch longer than ``max_epoch_steps``, or a run-level plateau (checked
only after ``run_plateau_warmup`` steps of the current epoch).
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .damage import SUPPORT_EPS
from .graph import PatrollingGraph
from .memory import MemoryAdjustError, adjust_memory_bounded
from .strategy import (StateSpace, Strategy, build_state_space, degree_assignment,
                       expand_strategy, init_params, log_params, softmax_pullback,
                       softmax_strategy, uniform_assignment)
from .value import value

log = logging.getLogger(__name__)


@dataclass
class SynthesisConfig:
    memory_mode: str = "auto"          # "auto", "deg" or "uniform:K"
    state_bound: int = 300
    eps: float = 0.25
    timeout: float = 180.0
    max_epoch_steps: int = 2000
    epoch_min_steps: int = 200
    epoch_plateau_patience: int = 20
    run_plateau_patience: int = 100
    run_plateau_warmup: int = 500
    plateau_rel_eps: float = 1e-5
    epoch_improvement_threshold: float = 0.05
    value_floor: float = 1e-9
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_std: float = 0.05
    noise_decay: float = 0.999
    objective: str = "eligible"        # or "witness"
    scope: str = "bscc"
    support_eps: float = SUPPORT_EPS
    warm: bool = False
    polish: bool = True
    polish_thresholds: tuple = (1e-3, 1e-2, 1e-1, 1.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epoch_steps", "epoch_min_steps", "epoch_plateau_patience",
                     "run_plateau_patience", "run_plateau_warmup"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.plateau_rel_eps < 1:
            raise ValueError("plateau_rel_eps must lie in (0, 1)")
        if self.objective not in ("eligible", "witness"):
            raise ValueError(f"unknown objective {self.objective!r}")
        parse_memory_mode(self.memory_mode)

    def initial_memory(self, g: PatrollingGraph) -> dict:
        kind, k = parse_memory_mode(self.memory_mode)
        if kind == "auto":
            return uniform_assignment(g, 1)
        if kind == "deg":
            return degree_assignment(g)
        return uniform_assignment(g, k)


def parse_memory_mode(mode: str):
    if mode == "auto":
        return "auto", None
    if mode in ("deg", "degree"):
        return "deg", None
    if mode.startswith("uniform:"):
        k = int(mode.split(":", 1)[1])
        if k < 1:
            raise ValueError("uniform memory must be >= 1")
        return "uniform", k
    raise ValueError(f"unknown memory mode {mode!r}; use auto, deg or uniform:K")


@dataclass
class RunResult:
    seed: int
    best_value: float
    best_strategy: Strategy | None = field(repr=False)
    memory_history: list
    value_trace: list = field(repr=False)      # (step, wall seconds, value, best value)
    steps: int = 0
    epochs: int = 0
    wall_time: float = 0.0
    termination: str = ""
    polished: bool = False
    epoch_log: list = field(default_factory=list, repr=False)

    @property
    def states(self) -> int:
        return sum(self.memory_history[-1].values())

    def row(self) -> dict:
        return {
            "seed": self.seed, "steps": self.steps, "epochs": self.epochs,
            "states": self.states, "best_value": self.best_value,
            "wall_s": round(self.wall_time, 3), "termination": self.termination,
        }


class _Adam:
    def __init__(self, n, cfg: SynthesisConfig):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.cfg = cfg

    def step(self, grad):
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mhat = self.m / (1 - c.beta1 ** self.t)
        vhat = self.v / (1 - c.beta2 ** self.t)
        return c.lr * mhat / (np.sqrt(vhat) + c.adam_eps)


def objective_grad(strategy: Strategy, cfg: SynthesisConfig, report=None):
    """Value report and the parameter gradient of the descent objective.

    The objective averages the damage of all eligible attacks (or uses the
    witness alone). When the value is infinite, the gradient is taken on the
    same strategy with every transition counted as support, where all
    damages are finite.
    """
    rep = report or value(strategy, eps=cfg.eps, support_eps=cfg.support_eps, scope=cfg.scope)
    use = rep
    if not rep.finite:
        use = value(strategy, eps=cfg.eps, support_eps=0.0, scope=cfg.scope)
        if not use.finite or use.value <= 0:
            return rep, np.zeros(strategy.space.n_edges)
    if use.value <= 0:
        return rep, np.zeros(strategy.space.n_edges)
    attacks = [use.witness] if cfg.objective == "witness" else use.all_eligible
    # log-scaled: same direction, magnitude independent of the value's scale
    mean = sum(a.value for a in attacks) / len(attacks)
    w = 1.0 / (len(attacks) * mean)
    gp = use.evaluator.grad_p([(a.edge, a.target, w) for a in attacks])
    return rep, softmax_pullback(strategy.space, strategy.p, gp)


@dataclass
class _Run:
    cfg: SynthesisConfig
    t0: float
    deadline: float
    step: int = 0
    best_value: float = math.inf
    best_strategy: Strategy | None = None
    trace: list = field(default_factory=list)


def _plateau(history, patience, rel_eps):
    if len(history) <= patience:
        return False
    return history[-1] > (1.0 - rel_eps) * history[-1 - patience]


def optimize_epoch(space: StateSpace, params: np.ndarray, cfg: SynthesisConfig, *,
                   rng: np.random.Generator, run: _Run | None = None,
                   reference: float | None = None, may_switch: bool = False):
    """Optimize parameters on a fixed state space.

    Returns ``(params, epoch_best_value, epoch_best_strategy, stop_reason)``.
    Stop reasons: ``value_floor``, ``timeout``, ``epoch_cap``,
    ``run_plateau`` and, when ``may_switch``, ``epoch_plateau`` (a plateau
    after the epoch improved on ``reference`` by the configured fraction; with
    no reference, as in a run's first epoch, any plateau qualifies).
    """
    if run is None:
        now = time.perf_counter()
        run = _Run(cfg, now, now + cfg.timeout)
    x = np.array(params, dtype=float)
    adam = _Adam(len(x), cfg)
    noise = cfg.noise_std
    best_val, best_strat = math.inf, None
    history = []
    steps = 0
    while True:
        strat = softmax_strategy(space, x)
        rep, grad = objective_grad(strat, cfg)
        val = rep.value
        run.step += 1
        steps += 1
        if val < best_val or best_strat is None:
            best_val, best_strat = val, strat
        if val < run.best_value or run.best_strategy is None:
            run.best_value, run.best_strategy = val, strat
        history.append(best_val)
        run.trace.append((run.step, time.perf_counter() - run.t0, val, run.best_value))
        if best_val < cfg.value_floor:
            return x, best_val, best_strat, "value_floor"
        if time.perf_counter() >= run.deadline:
            return x, best_val, best_strat, "timeout"
        if steps >= cfg.max_epoch_steps:
            return x, best_val, best_strat, "epoch_cap"
        if steps >= cfg.run_plateau_warmup and _plateau(
                history, cfg.run_plateau_patience, cfg.plateau_rel_eps):
            return x, best_val, best_strat, "run_plateau"
        if (may_switch and steps >= cfg.epoch_min_steps
                and _plateau(history, cfg.epoch_plateau_patience, cfg.plateau_rel_eps)
                and (reference is None
                     or best_val <= (1.0 - cfg.epoch_improvement_threshold) * reference)):
            return x, best_val, best_strat, "epoch_plateau"
        if not np.any(grad):
            log.debug("zero gradient at step %d", run.step)
        x = x - adam.step(grad)
        if noise > 0:
            x = x + rng.normal(0.0, noise, size=len(x))
            noise *= cfg.noise_decay


def prune_strategy(strategy: Strategy, threshold: float) -> Strategy:
    """Drop transitions below ``threshold`` times their row maximum and renormalize.

    A threshold of 1 keeps only the most likely transition of every state.
    """
    sp = strategy.space
    p = strategy.p
    row_max = np.repeat(np.maximum.reduceat(p, sp.row_ptr[:-1]), sp.out_degree)
    keep = p >= threshold * row_max
    if threshold >= 1.0:
        # exactly one survivor per row, the first maximum
        keep = np.zeros_like(keep)
        for c in range(sp.n_states):
            a = sp.row_ptr[c]
            keep[a + int(np.argmax(p[a:sp.row_ptr[c + 1]]))] = True
    q = np.where(keep, p, 0.0)
    sums = np.repeat(np.add.reduceat(q, sp.row_ptr[:-1]), sp.out_degree)
    return Strategy(sp, q / sums)


def polish(strategy: Strategy, cfg: SynthesisConfig):
    """Best of ``strategy`` and its pruned variants, as ``(value, strategy)``."""
    best_val = value(strategy, eps=cfg.eps, support_eps=cfg.support_eps, scope=cfg.scope).value
    best = strategy
    for th in cfg.polish_thresholds:
        cand = prune_strategy(strategy, th)
        v = value(cand, eps=cfg.eps, support_eps=cfg.support_eps, scope=cfg.scope).value
        if v < best_val:
            best_val, best = v, cand
    return best_val, best


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Generator for one epoch; depends only on the run seed and epoch number."""
    return np.random.default_rng((seed, epoch))


def synthesize(g: PatrollingGraph, cfg: SynthesisConfig | None = None, *,
               start_memory: dict | None = None, start_epoch: int = 1,
               reference: float | None = None) -> RunResult:
    """One seeded run.

    ``start_memory``, ``start_epoch`` and ``reference`` resume a run at the
    beginning of an epoch recorded in a previous result's ``epoch_log``;
    the remaining value trace is reproduced exactly (wall times aside,
    and provided no timeout intervenes).
    """
    cfg = cfg or SynthesisConfig()
    kind, _ = parse_memory_mode(cfg.memory_mode)
    mem = dict(start_memory) if start_memory is not None else cfg.initial_memory(g)
    if kind == "auto" and sum(mem.values()) > cfg.state_bound:
        raise ValueError(f"state bound {cfg.state_bound} is below the {sum(mem.values())} "
                         "initial states")
    t0 = time.perf_counter()
    run = _Run(cfg, t0, t0 + cfg.timeout)
    history, epoch_log = [], []
    space = build_state_space(g, mem)
    epoch = start_epoch
    rng = epoch_rng(cfg.seed, epoch)
    params = init_params(space, rng)
    while True:
        history.append(dict(mem))
        first_step = run.step + 1
        params, ep_val, ep_strat, reason = optimize_epoch(
            space, params, cfg, rng=rng, run=run, reference=reference,
            may_switch=(kind == "auto"))
        epoch_log.append({"epoch": epoch, "memory": dict(mem), "first_step": first_step,
                          "reference": reference, "best_value": ep_val, "stop": reason})
        if reason != "epoch_plateau":
            break
        try:
            mem2, copies, _ = adjust_memory_bounded(
                ep_strat, cfg.eps, cfg.state_bound, support_eps=cfg.support_eps,
                scope=cfg.scope, return_copies=True)
        except MemoryAdjustError as exc:
            log.debug("memory adjustment skipped: %s", exc)
            reason = "no_adjustment"
            break
        reference = min(run.best_value, ep_val)
        epoch += 1
        rng = epoch_rng(cfg.seed, epoch)
        if mem2 == mem:
            # same assignment: keep the parameters, reset optimizer and noise
            continue
        mem = mem2
        if cfg.warm:
            copy_map = {s: k for s, k in zip(ep_strat.space.states, copies)}
            expanded = expand_strategy(ep_strat, copy_map)
            space = expanded.space
            params = log_params(expanded, floor=1e-12)
        else:
            space = build_state_space(g, mem)
            params = init_params(space, rng)
    polished = False
    if cfg.polish and run.best_strategy is not None and run.best_value >= cfg.value_floor:
        val, strat = polish(run.best_strategy, cfg)
        if val < run.best_value:
            run.best_value, run.best_strategy, polished = val, strat, True
            run.trace.append((run.step, time.perf_counter() - t0, val, val))
    return RunResult(
        seed=cfg.seed, best_value=run.best_value, best_strategy=run.best_strategy,
        memory_history=history, value_trace=run.trace, steps=run.step,
        epochs=len(epoch_log), wall_time=time.perf_counter() - t0, termination=reason,
        polished=polished, epoch_log=epoch_log)


def _run_one(args):
    g, cfg = args
    return synthesize(g, cfg)


@dataclass
class RestartSummary:
    runs: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    successes: int
    baseline: float | None = None

    def normalized(self) -> dict | None:
        if not self.baseline or not math.isfinite(self.baseline):
            return None
        return {k: getattr(self, k) / self.baseline for k in ("min", "q1", "median", "q3", "max")}

    def to_dict(self) -> dict:
        out = asdict(self)
        norm = self.normalized()
        if norm:
            out.update({f"norm_{k}": v for k, v in norm.items()})
        return out


def summarize(results, baseline=None, success_tol: float = 1e-6) -> RestartSummary:
    vals = np.array([r.best_value for r in results], dtype=float)
    q = np.percentile(vals, [0, 25, 50, 75, 100]) if len(vals) else [math.nan] * 5
    return RestartSummary(len(vals), *map(float, q), int(np.sum(vals <= success_tol)), baseline)


def default_workers() -> int:
    import os

    env = os.environ.get("PATROLSYNTH_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_restarts(g: PatrollingGraph, cfg: SynthesisConfig, restarts: int,
                 seeds=None, workers: int | None = None, baseline=None):
    """Independent seeded runs; returns ``(results in seed order, summary)``."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    seeds = list(seeds) if seeds is not None else [cfg.seed + i for i in range(restarts)]
    jobs = [(g, replace(cfg, seed=s)) for s in seeds[:restarts]]
    workers = min(workers or default_workers(), len(jobs))
    if workers <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    return results, summarize(results, baseline)


__all__ = [
    "RestartSummary", "RunResult", "SynthesisConfig", "objective_grad", "optimize_epoch",
    "parse_memory_mode", "polish", "prune_strategy", "run_restarts", "summarize", "synthesize",
]
