"""Fitness functions for the search.

An evaluator is any callable ``ArchConfig -> float`` (a score in [0, 1]) with
an ``id`` string for run headers. All of them are pure.
"""
from __future__ import annotations

import math
import threading

import numpy as np

from snas.archspace import ArchConfig, BackboneSkeleton, encode
from snas.supernet import SupernetWeights, predict


class SupernetEvaluator:
    """Top-1 validation accuracy of a sub-network with inherited weights."""

    def __init__(self, weights: SupernetWeights, skeleton: BackboneSkeleton, val):
        self.weights = weights
        self.skeleton = skeleton
        self.val = val
        self.id = f"supernet:{skeleton.hash()[:12]}"

    def __call__(self, config: ArchConfig) -> float:
        preds = predict(self.weights, self.skeleton, config, self.val.images)
        return float((preds == self.val.labels).mean())


def evaluate_supernet(weights, skeleton, config, val) -> float:
    return SupernetEvaluator(weights, skeleton, val)(config)


class SurrogateEvaluator:
    """Deterministic analytic fitness: sigmoid of a linear plus pairwise form.

    ``score = sigmoid(sum_i w_i f_i + sum_{i<j} u_ij f_i f_j)`` over the width
    ratios ``f``. ``w`` and ``u`` are drawn once from ``seed``. The terms are
    summed left to right in Python floats, so results match across platforms.
    With ``monotone=True`` every ``w_i`` is positive and ``u`` is zero.
    """

    def __init__(self, n_layers: int, seed: int = 0, pair_scale: float = 0.25,
                 monotone: bool = False):
        rng = np.random.default_rng(seed)
        self.n = n_layers
        self.linear = [float(x) for x in rng.uniform(0.2, 1.0, size=n_layers)]
        pairs = rng.normal(0.0, pair_scale, size=(n_layers, n_layers))
        self.pairwise = [[0.0 if (monotone or j <= i) else float(pairs[i, j])
                          for j in range(n_layers)] for i in range(n_layers)]
        self.id = f"surrogate:{seed}{':monotone' if monotone else ''}"

    def logit(self, config: ArchConfig) -> float:
        f = config.ratios
        if len(f) != self.n:
            raise ValueError(f"surrogate built for {self.n} layers, got {len(f)}")
        total = 0.0
        for i in range(self.n):
            total += self.linear[i] * f[i]
        for i in range(self.n):
            for j in range(i + 1, self.n):
                total += self.pairwise[i][j] * f[i] * f[j]
        return total

    def __call__(self, config: ArchConfig) -> float:
        return 1.0 / (1.0 + math.exp(-self.logit(config)))


def evaluate_surrogate(config: ArchConfig, skeleton: BackboneSkeleton, surrogate_seed: int) -> float:
    return SurrogateEvaluator(skeleton.searchable_count, surrogate_seed)(config)


class CachedEvaluator:
    """Memoizes an inner evaluator by canonical architecture string."""

    def __init__(self, inner):
        self.inner = inner
        self.id = getattr(inner, "id", type(inner).__name__)
        self.hits = 0
        self.misses = 0
        self._store = {}
        self._lock = threading.Lock()

    def __call__(self, config: ArchConfig) -> float:
        key = encode(config)
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        score = self.inner(config)
        with self._lock:
            if key in self._store:
                self.hits += 1
            else:
                self.misses += 1
                self._store[key] = score
            return self._store[key]


def cached(inner) -> CachedEvaluator:
    return CachedEvaluator(inner)
