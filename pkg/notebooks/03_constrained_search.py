"""
Evolutionary search under a FLOP budget
=======================================

The search only ever keeps feasible candidates. A deterministic surrogate
stands in for supernet accuracy here so the answer can be checked by
brute force over all 65,536 architectures of an 8-layer space.
"""

import numpy as np

from snas.archspace import BackboneSkeleton, LayerDescriptor, LayerKind, enumerate_configs
from snas.costmodel import HardwareConstraints, evaluate_cost
from snas.evaluator import CachedEvaluator, SurrogateEvaluator
from snas.evolution import EvolutionParams, run_search

C3, C1 = LayerKind.CONV3X3, LayerKind.CONV1X1
convs = [(C3, 16, 1), (C3, 16, 2), (C3, 32, 1), (C1, 32, 1),
         (C3, 48, 2), (C1, 48, 1), (C3, 64, 2), (C1, 64, 1)]
layers = [LayerDescriptor(kind, width, stride, searchable=True) for kind, width, stride in convs]
layers += [LayerDescriptor(LayerKind.GLOBAL_AVG_POOL), LayerDescriptor(LayerKind.LINEAR_HEAD)]
skeleton = BackboneSkeleton(16, 16, 3, layers, 10)

# budget: the 40th percentile of all FLOP counts
configs = list(enumerate_configs(skeleton))
flops = np.array([evaluate_cost(skeleton, c).flops for c in configs])
budget = HardwareConstraints(max_flops=int(np.quantile(flops, 0.4)))
print("feasible fraction", round(float((flops <= budget.max_flops).mean()), 3))

surrogate = SurrogateEvaluator(8, seed=0)
evaluator = CachedEvaluator(surrogate)
result = run_search(skeleton, budget, EvolutionParams(seed=0), evaluator)
print("evaluations", result.evaluations, "cache hits", evaluator.hits)
print("best fitness by epoch", np.round(result.history, 4))

# brute force for comparison
best = max((surrogate(c), str(c)) for c, f in zip(configs, flops) if f <= budget.max_flops)
print("search top-1 ", result.top[0].key, round(result.top[0].fitness, 6))
print("exhaustive   ", best[1], round(best[0], 6))
