import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import search_skeleton, toy_skeleton
from snas.archspace import ArchConfig, decode, default_skeleton, draw_uniform
from snas.costmodel import UNCONSTRAINED, HardwareConstraints, ResourceCost, evaluate_cost, satisfies
from snas.errors import ConfigurationError, EvaluationError, InfeasibleError
from snas.evaluator import CachedEvaluator, SurrogateEvaluator
from snas.evolution import (Candidate, EvolutionParams, Population, RunLog, crossover, mutate,
                            run_search, sort_key, total_order)

SK11 = default_skeleton()


def cand(quarters, fitness, flops=100, params=10):
    return Candidate(ArchConfig(tuple(quarters)), ResourceCost(params, flops), fitness, "random", 0)


def test_mutate_p0_is_identity():
    rng = np.random.default_rng(0)
    parent = draw_uniform(11, rng)
    assert all(mutate(parent, 0.0, rng, UNCONSTRAINED, SK11) == parent for _ in range(200))


def test_mutate_p1_is_uniform():
    rng = np.random.default_rng(1)
    parent = ArchConfig.uniform(11, 2)
    draws = np.array([mutate(parent, 1.0, rng, UNCONSTRAINED, SK11).quarters for _ in range(40_000)])
    for q in (1, 2, 3, 4):
        assert np.all(np.abs((draws == q).mean(axis=0) - 0.25) <= 0.02)


def test_mutate_changed_layer_count():
    rng = np.random.default_rng(2)
    parent = np.array(ArchConfig.uniform(11, 3).quarters)
    changed = [np.sum(np.array(mutate(ArchConfig(tuple(parent)), 0.1, rng, UNCONSTRAINED,
                                      SK11).quarters) != parent) for _ in range(40_000)]
    assert abs(np.mean(changed) - 11 * 0.1 * 0.75) <= 0.05


def test_mutate_respects_constraints():
    rng = np.random.default_rng(3)
    limit = HardwareConstraints(max_flops=evaluate_cost(SK11, ArchConfig.uniform(11, 2)).flops)
    parent = ArchConfig.uniform(11, 1)
    for _ in range(200):
        assert satisfies(evaluate_cost(SK11, mutate(parent, 0.5, rng, limit, SK11)), limit)


def test_mutate_exhaustion_raises():
    limit = HardwareConstraints(max_params=evaluate_cost(SK11, ArchConfig.uniform(11, 1)).params - 1)
    with pytest.raises(InfeasibleError) as err:
        mutate(ArchConfig.uniform(11, 1), 0.5, np.random.default_rng(0), limit, SK11, max_retries=20)
    assert err.value.constraint == "max_params"


def test_crossover_identical_parents():
    rng = np.random.default_rng(4)
    parent = draw_uniform(11, rng)
    for p in (0.0, 0.1, 0.5, 1.0):
        assert crossover(parent, parent, p, rng, UNCONSTRAINED, SK11) == parent


def test_crossover_p1_returns_first_parent():
    rng = np.random.default_rng(5)
    a, b = ArchConfig.uniform(11, 1), ArchConfig.uniform(11, 4)
    assert all(crossover(a, b, 1.0, rng, UNCONSTRAINED, SK11) == a for _ in range(100))
    assert all(crossover(a, b, 0.0, rng, UNCONSTRAINED, SK11) == b for _ in range(100))


def test_crossover_genes_come_from_parents():
    rng = np.random.default_rng(6)
    for _ in range(2000):
        a, b = draw_uniform(11, rng), draw_uniform(11, rng)
        child = crossover(a, b, 0.1, rng, UNCONSTRAINED, SK11)
        assert all(c in (x, y) for c, x, y in zip(child.quarters, a.quarters, b.quarters))


def test_crossover_takes_first_parent_at_rate_p():
    rng = np.random.default_rng(7)
    a, b = ArchConfig.uniform(11, 1), ArchConfig.uniform(11, 4)
    kids = np.array([crossover(a, b, 0.1, rng, UNCONSTRAINED, SK11).quarters for _ in range(10_000)])
    assert abs((kids == 1).mean() - 0.1) < 0.01


def test_crossover_length_mismatch():
    with pytest.raises(ConfigurationError):
        crossover(ArchConfig((1, 2)), ArchConfig((1,)), 0.5, np.random.default_rng(0),
                  UNCONSTRAINED, SK11)


def test_total_order_examples():
    cheap, dear = cand((4, 4), 0.5, flops=100), cand((3, 4), 0.5, flops=200)
    assert total_order(cheap, dear) == -1 and total_order(dear, cheap) == 1
    low, high = cand((1, 4, 4, 4), 0.5), cand((4, 1, 1, 1), 0.5)
    assert total_order(low, high) == -1
    assert total_order(cand((1,), 0.9), cand((1,), 0.1, flops=1)) == -1
    assert total_order(low, low) == 0
    fewer = cand((2, 2), 0.5, params=5)
    assert total_order(fewer, cand((1, 1), 0.5, params=6)) == -1


@settings(max_examples=50)
@given(st.permutations(list(range(12))))
def test_sorting_is_permutation_invariant(perm):
    rng = np.random.default_rng(0)
    pool = [cand(draw_uniform(4, rng).quarters, float(rng.choice([0.1, 0.5])),
                 flops=int(rng.choice([1, 2])), params=int(rng.choice([1, 2]))) for _ in range(12)]
    assert sorted([pool[i] for i in perm], key=sort_key) == sorted(pool, key=sort_key)


def test_population_dedups_and_truncates():
    pop = Population(2)
    pop.add([cand((1, 1), 0.2), cand((1, 1), 0.9), cand((2, 2), 0.5), cand((3, 3), 0.7)])
    assert [c.key for c in pop] == ["33", "22", "11"]
    pop.truncate()
    assert [c.key for c in pop] == ["33", "22"] and "11" not in pop


@pytest.mark.parametrize("bad", [dict(top_k=60), dict(top_n=51), dict(probability=1.5),
                                 dict(mutation_times=0), dict(epochs=-1)])
def test_params_validation(bad):
    with pytest.raises(ConfigurationError):
        EvolutionParams(**bad)


def test_params_defaults():
    p = EvolutionParams()
    assert (p.population_size, p.epochs, p.probability, p.mutation_times, p.crossover_times,
            p.top_k, p.top_n) == (50, 20, 0.1, 25, 25, 20, 10)


SMALL = dict(population_size=20, epochs=5, mutation_times=8, top_k=8, top_n=5)


def small_run(seed=0, workers=1, constraints=None, evaluator=None, **over):
    sk = search_skeleton()
    params = EvolutionParams(seed=seed, **{**SMALL, **over})
    if constraints is None:
        constraints = HardwareConstraints(max_flops=evaluate_cost(sk, ArchConfig.uniform(8, 3)).flops)
    ev = evaluator or SurrogateEvaluator(8, seed)
    return run_search(sk, constraints, params, ev, workers=workers), constraints


def test_zero_epochs_returns_initial_population():
    result, _ = small_run(epochs=0)
    pops = result.log.populations()
    assert len(pops) == 1 and pops[0]["stage"] == "initial"
    assert len(pops[0]["members"]) == 20
    assert [c.key for c in result.top] == [m["config"] for m in pops[0]["members"][:5]]
    assert result.evaluations == 20
    assert pops[0]["members"][0]["origin"] in ("seed", "random")


def test_default_baseline_is_full_width_when_feasible():
    result, _ = small_run(constraints=UNCONSTRAINED, epochs=0)
    seeded = [c for c in result.log.candidates() if c["origin"] == "seed"]
    assert [c["config"] for c in seeded] == ["44444444"]


def test_infeasible_baseline_rejected():
    sk = search_skeleton()
    limit = HardwareConstraints(max_flops=evaluate_cost(sk, ArchConfig.uniform(8, 2)).flops)
    with pytest.raises(InfeasibleError):
        run_search(sk, limit, EvolutionParams(**SMALL), SurrogateEvaluator(8),
                   baseline=ArchConfig.uniform(8, 4))


def test_runs_are_byte_identical():
    a, _ = small_run(seed=3)
    b, _ = small_run(seed=3)
    assert a.log.to_jsonl() == b.log.to_jsonl()
    c, _ = small_run(seed=4)
    assert a.log.to_jsonl() != c.log.to_jsonl()


def test_thread_pool_gives_identical_log():
    a, _ = small_run(seed=2)
    b, _ = small_run(seed=2, workers=4)
    assert a.log.to_jsonl() == b.log.to_jsonl()


def test_logged_candidates_are_feasible():
    result, limit = small_run(seed=5)
    sk = search_skeleton()
    for rec in result.log.candidates():
        cost = evaluate_cost(sk, decode(rec["config"], sk))
        assert satisfies(cost, limit)
        assert (cost.params, cost.flops) == (rec["params"], rec["flops"])


def test_populations_have_no_duplicates():
    result, _ = small_run(seed=6)
    for pop in result.log.populations():
        keys = [m["config"] for m in pop["members"]]
        assert len(keys) == len(set(keys)) == 20


def test_best_fitness_never_decreases():
    result, _ = small_run(seed=7, epochs=10)
    assert len(result.history) == 10
    assert all(b >= a for a, b in zip(result.history, result.history[1:]))


def test_evaluation_budget():
    ev = CachedEvaluator(SurrogateEvaluator(8, 8))
    result, _ = small_run(seed=8, evaluator=ev)
    per_gen = {}
    for rec in result.log.candidates():
        per_gen[rec["generation"]] = per_gen.get(rec["generation"], 0) + 1
    # generation 0 is the baseline; epoch 1 may fill 19 slots, later epochs none
    assert per_gen[0] == 1
    for gen, count in per_gen.items():
        if gen:
            deficit = 19 if gen == 1 else 0
            assert count <= deficit + 2 * SMALL["mutation_times"]
    assert ev.misses == result.evaluations == len(result.log.candidates())
    unique = {r["config"] for r in result.log.candidates()}
    assert ev.misses <= len(unique)


def test_evaluator_failure_names_config():
    def broken(config):
        raise RuntimeError("boom")
    with pytest.raises(EvaluationError, match="44444444"):
        small_run(constraints=UNCONSTRAINED, evaluator=broken)


def test_non_finite_fitness_rejected():
    with pytest.raises(EvaluationError):
        small_run(constraints=UNCONSTRAINED, evaluator=lambda c: float("nan"))


def test_too_small_space_cannot_fill():
    sk = toy_skeleton(2)
    with pytest.raises(InfeasibleError):
        run_search(sk, UNCONSTRAINED, EvolutionParams(population_size=20, top_k=5, top_n=5,
                                                      max_sample_retries=200),
                   SurrogateEvaluator(2))


def test_log_round_trip(tmp_path):
    result, _ = small_run(seed=9)
    path = tmp_path / "log.jsonl"
    result.log.write(path)
    again = RunLog.read(path)
    assert again.records == result.log.records
    assert again.header["seed"] == 9
    assert [r["config"] for r in again.final_top()] == [c.key for c in result.top]


def test_log_rejects_garbage(tmp_path):
    path = tmp_path / "log.jsonl"
    path.write_text('{"type": "header"}\nnot json\n')
    with pytest.raises(ConfigurationError, match=":2:"):
        RunLog.read(path)
