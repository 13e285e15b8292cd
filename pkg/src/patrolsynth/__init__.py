"""Synthesis of randomized finite-memory patrolling strategies.

The Defender walks a patrolling graph; an Attacker watching every move picks
the most damaging moment to attack a target. Strategies are Markov chains
over (location, memory) states, optimized by gradient descent, with memory
sizes chosen automatically from conflicting attack gradients.
"""

from .baselines import baseline_cycle, cycle_strategy
from .damage import DamageEvaluator, damage_blind, damage_grad, damage_linear
from .graph import GraphError, PatrollingGraph, TargetSpec, load_graph, read_graph
from .memory import adjust_memory, adjust_memory_bounded
from .strategy import (Strategy, StrategyError, build_state_space, degree_assignment,
                       expand_strategy, softmax_strategy, strategy_from_json, uniform_assignment)
from .synth import SynthesisConfig, run_restarts, synthesize
from .value import value

__version__ = "0.1.0"

__all__ = [
    "DamageEvaluator", "GraphError", "PatrollingGraph", "Strategy", "StrategyError",
    "SynthesisConfig", "TargetSpec", "adjust_memory", "adjust_memory_bounded",
    "baseline_cycle", "build_state_space", "cycle_strategy", "damage_blind", "damage_grad",
    "damage_linear", "degree_assignment", "expand_strategy", "load_graph", "read_graph",
    "run_restarts", "softmax_strategy", "strategy_from_json", "synthesize",
    "uniform_assignment", "value",
]
