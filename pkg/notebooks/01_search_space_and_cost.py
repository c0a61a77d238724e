"""
Width search space and analytic cost
====================================

Every searchable conv layer picks a width multiplier from 0.25, 0.5, 0.75, 1.0.
An architecture is one digit per layer (1..4 quarters).
"""

import numpy as np

from snas.archspace import (ArchConfig, decode, default_skeleton, resolve_channels, sample_random,
                            space_cardinality)
from snas.costmodel import HardwareConstraints, evaluate_cost

skeleton = default_skeleton()
print("searchable layers:", skeleton.searchable_count)
print("architectures:", f"{space_cardinality(skeleton):,}")

# the widest and narrowest sub-networks bound the cost range
for text in ("44444444444", "11111111111"):
    config = decode(text, skeleton)
    print(text, resolve_channels(skeleton, config), evaluate_cost(skeleton, config).describe())

# a mixed allocation: keep early layers wide, thin out the deep ones
mixed = ArchConfig.from_ratios([1.0] * 5 + [0.75, 1.0, 0.5, 0.75, 0.75, 1.0])
print(mixed, evaluate_cost(skeleton, mixed).describe())

# constrained sampling rejects anything over budget
budget = HardwareConstraints(max_flops=evaluate_cost(skeleton, ArchConfig.uniform(11, 2)).flops)
rng = np.random.default_rng(0)
draws = [sample_random(skeleton, budget, rng) for _ in range(5)]
for d in draws:
    print("feasible draw", d, evaluate_cost(skeleton, d).flops, "<=", budget.max_flops)
