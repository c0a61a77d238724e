"""Constrained evolutionary search over a weight-sharing search space.

Each epoch tops the population up to ``P`` with feasible random samples,
sorts it, refreshes the running top-k, breeds ``m`` mutants and ``m``
crossovers from the top-k, merges and truncates back to ``P``. After ``T``
epochs the best ``n`` are returned.

All random draws for a batch happen before the batch is evaluated, and the
population is always re-sorted by a total order, so evaluating a batch on a
thread pool gives the same trajectory as evaluating it sequentially.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from snas import __version__
from snas.archspace import (DEFAULT_MAX_RETRIES, ArchConfig, BackboneSkeleton, encode,
                            sample_random)
from snas.costmodel import HardwareConstraints, ResourceCost, evaluate_cost, satisfies, violations
from snas.errors import ConfigurationError, EvaluationError, InfeasibleError

logger = logging.getLogger(__name__)

ORIGINS = ("seed", "random", "mutation", "crossover")
DUPLICATE_RETRIES = 50


@dataclass
class EvolutionParams:
    population_size: int = 50
    epochs: int = 20
    probability: float = 0.1
    mutation_times: int = 25
    crossover_times: Optional[int] = None  # None: same as mutation_times
    top_k: int = 20
    top_n: int = 10
    seed: int = 0
    max_sample_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self):
        if self.crossover_times is None:
            self.crossover_times = self.mutation_times
        for name in ("population_size", "mutation_times", "crossover_times", "top_k",
                     "top_n", "max_sample_retries"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError("probability must lie in [0, 1]")
        if self.top_k > self.population_size or self.top_n > self.population_size:
            raise ConfigurationError("top_k and top_n must not exceed population_size")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Candidate:
    config: ArchConfig
    cost: ResourceCost
    fitness: float
    origin: str
    generation: int

    @property
    def key(self) -> str:
        return encode(self.config)


def sort_key(c: Candidate):
    """Descending fitness, then ascending flops, params, architecture string."""
    return (-c.fitness, c.cost.flops, c.cost.params, c.key)


def total_order(a: Candidate, b: Candidate) -> int:
    ka, kb = sort_key(a), sort_key(b)
    return (ka > kb) - (ka < kb)


class Population:
    """Sorted, duplicate-free candidate list."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.members: List[Candidate] = []
        self._keys = set()

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, key: str) -> bool:
        return key in self._keys

    def add(self, candidates) -> None:
        for c in candidates:
            if c.key not in self._keys:
                self._keys.add(c.key)
                self.members.append(c)
        self.members.sort(key=sort_key)

    def truncate(self) -> None:
        self.members = self.members[:self.capacity]
        self._keys = {c.key for c in self.members}

    def top(self, k: int) -> list:
        return self.members[:k]


def _retry_until_feasible(draw: Callable[[], ArchConfig], skeleton, constraints, max_retries):
    from collections import Counter
    misses = Counter()
    for _ in range(max_retries):
        config = draw()
        violated = violations(evaluate_cost(skeleton, config), constraints)
        if not violated:
            return config
        misses.update(violated)
    raise InfeasibleError.from_counts(misses, max_retries)


def mutate(parent: ArchConfig, p: float, rng: np.random.Generator,
           constraints: HardwareConstraints, skeleton: BackboneSkeleton,
           max_retries: int = DEFAULT_MAX_RETRIES) -> ArchConfig:
    """Resample each gene uniformly with probability ``p``, else keep it."""
    parent_q = np.array(parent.quarters)

    def draw():
        flip = rng.random(len(parent_q)) < p
        fresh = rng.integers(1, 5, size=len(parent_q))
        return ArchConfig(tuple(int(x) for x in np.where(flip, fresh, parent_q)))

    return _retry_until_feasible(draw, skeleton, constraints, max_retries)


def crossover(parent1: ArchConfig, parent2: ArchConfig, p: float, rng: np.random.Generator,
              constraints: HardwareConstraints, skeleton: BackboneSkeleton,
              max_retries: int = DEFAULT_MAX_RETRIES) -> ArchConfig:
    """Take each gene from ``parent1`` with probability ``p``, else from ``parent2``."""
    if len(parent1) != len(parent2):
        raise ConfigurationError("crossover parents differ in length")
    a, b = np.array(parent1.quarters), np.array(parent2.quarters)

    def draw():
        take_first = rng.random(len(a)) < p
        return ArchConfig(tuple(int(x) for x in np.where(take_first, a, b)))

    return _retry_until_feasible(draw, skeleton, constraints, max_retries)


@dataclass
class RunLog:
    """Line-delimited run record: one header, then candidate and population events."""

    records: list = field(default_factory=list)

    def append(self, record: dict) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "RunLog":
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigurationError(f"{path}:{lineno}: malformed log line ({exc})") from None
        return cls(records)

    @property
    def header(self) -> dict:
        return next(r for r in self.records if r.get("type") == "header")

    def populations(self) -> list:
        return [r for r in self.records if r.get("type") == "population"]

    def candidates(self) -> list:
        return [r for r in self.records if r.get("type") == "candidate"]

    def final_top(self) -> list:
        final = [r for r in self.records if r.get("type") == "result"]
        return final[-1]["top"] if final else []


@dataclass
class SearchResult:
    top: List[Candidate]
    log: RunLog
    evaluations: int
    history: list  # best fitness after each epoch


def run_search(skeleton: BackboneSkeleton, constraints: HardwareConstraints,
               params: EvolutionParams, evaluator, baseline: Optional[ArchConfig] = None,
               workers: int = 1, run_id: str = "run", record_timing: bool = False,
               extra_header: Optional[dict] = None) -> SearchResult:
    """Evolutionary search under hardware constraints.

    ``workers > 1`` evaluates each batch on a thread pool; the result is
    identical to ``workers=1``. ``wall_ms`` is logged as 0 unless
    ``record_timing`` is set, since timings would break byte-identical logs.
    """
    rng = np.random.default_rng(params.seed)
    n_layers = skeleton.searchable_count
    log = RunLog()
    header = {
        "type": "header", "run_id": run_id, "seed": params.seed, "params": params.to_dict(),
        "constraints": constraints.to_dict(), "skeleton_hash": skeleton.hash(),
        "evaluator": getattr(evaluator, "id", type(evaluator).__name__),
        "code_version": __version__,
    }
    header.update(extra_header or {})
    log.append(header)
    evaluations = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def evaluate_batch(batch):
        nonlocal evaluations
        configs = [cfg for cfg, _, _ in batch]

        def timed(cfg):
            t0 = time.perf_counter()
            try:
                score = float(evaluator(cfg))
            except Exception as exc:
                raise EvaluationError(f"evaluation of {encode(cfg)} failed: {exc}",
                                      encode(cfg)) from exc
            if not np.isfinite(score):
                raise EvaluationError(f"non-finite fitness for {encode(cfg)}", encode(cfg))
            return score, (time.perf_counter() - t0) * 1000.0

        results = list(pool.map(timed, configs)) if pool else [timed(c) for c in configs]
        evaluations += len(configs)
        out = []
        for (cfg, origin, gen), (score, ms) in zip(batch, results):
            cost = evaluate_cost(skeleton, cfg)
            cand = Candidate(cfg, cost, score, origin, gen)
            log.append({"type": "candidate", "run_id": run_id, "generation": gen,
                        "origin": origin, "config": cand.key, "params": cost.params,
                        "flops": cost.flops, "fitness": score,
                        "wall_ms": round(ms, 3) if record_timing else 0})
            out.append(cand)
        return out

    try:
        if baseline is None:
            full = ArchConfig.uniform(n_layers, 4)
            if satisfies(evaluate_cost(skeleton, full), constraints):
                baseline = full
            else:
                baseline = sample_random(skeleton, constraints, rng, params.max_sample_retries)
        elif len(baseline) != n_layers:
            raise ConfigurationError("baseline length does not match the skeleton")
        elif not satisfies(evaluate_cost(skeleton, baseline), constraints):
            raise InfeasibleError(f"baseline {encode(baseline)} violates the constraints",
                                  constraint=violations(evaluate_cost(skeleton, baseline),
                                                        constraints)[0])

        population = Population(params.population_size)
        population.add(evaluate_batch([(baseline, "seed", 0)]))
        top_k: List[Candidate] = []
        history = []

        def fill(generation):
            batch, seen = [], set()
            dupes = 0
            while len(population) + len(batch) < params.population_size:
                cfg = sample_random(skeleton, constraints, rng, params.max_sample_retries)
                key = encode(cfg)
                if key in population or key in seen:
                    dupes += 1
                    if dupes >= params.max_sample_retries:
                        raise InfeasibleError(
                            f"feasible space too small to fill a population of "
                            f"{params.population_size} distinct architectures")
                    continue
                dupes = 0
                seen.add(key)
                batch.append((cfg, "random", generation))
            population.add(evaluate_batch(batch))

        def log_population(generation, stage):
            log.append({"type": "population", "run_id": run_id, "generation": generation,
                        "stage": stage, "members": [
                            {"config": c.key, "fitness": c.fitness, "params": c.cost.params,
                             "flops": c.cost.flops, "origin": c.origin,
                             "generation": c.generation} for c in population]})

        for epoch in range(1, params.epochs + 1):
            fill(epoch)
            merged = {c.key: c for c in top_k + population.top(params.top_k)}
            top_k = sorted(merged.values(), key=sort_key)[:params.top_k]

            batch, seen = [], set()

            def breed(make, origin):
                # re-draw offspring that duplicate the population or this batch
                for _ in range(DUPLICATE_RETRIES):
                    cfg = make()
                    key = encode(cfg)
                    if key not in population and key not in seen:
                        seen.add(key)
                        batch.append((cfg, origin, epoch))
                        return

            def make_mutant():
                parent = top_k[int(rng.integers(len(top_k)))]
                return mutate(parent.config, params.probability, rng, constraints, skeleton,
                              params.max_sample_retries)

            def make_crossover():
                if len(top_k) >= 2:
                    i, j = rng.choice(len(top_k), size=2, replace=False)
                else:
                    i = j = 0
                return crossover(top_k[int(i)].config, top_k[int(j)].config, params.probability,
                                 rng, constraints, skeleton, params.max_sample_retries)

            for _ in range(params.mutation_times):
                breed(make_mutant, "mutation")
            for _ in range(params.crossover_times):
                breed(make_crossover, "crossover")
            population.add(evaluate_batch(batch))
            population.truncate()
            history.append(population.members[0].fitness)
            log_population(epoch, "survivors")
            logger.info("epoch %d/%d best %.6f (%s), %d evaluations", epoch, params.epochs,
                        population.members[0].fitness, population.members[0].key, evaluations)

        if params.epochs == 0:
            fill(0)
            log_population(0, "initial")

        top = population.top(params.top_n)
        log.append({"type": "result", "run_id": run_id, "evaluations": evaluations,
                    "top": [{"rank": r + 1, "config": c.key, "fitness": c.fitness,
                             "params": c.cost.params, "flops": c.cost.flops}
                            for r, c in enumerate(top)]})
        return SearchResult(top, log, evaluations, history)
    finally:
        if pool is not None:
            pool.shutdown()
