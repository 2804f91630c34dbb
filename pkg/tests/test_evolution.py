"""CMA-ES and GA sanity benchmarks, stopping rules and determinism."""

import numpy as np
import pytest

from evosched.evolution import (
    EvolutionConfig,
    RunTrace,
    TopKArchive,
    _Budget,
    cma_es_minimize,
    ga_minimize,
    genome_to_candidate,
    run_cma_es,
    run_ga,
)

from .conftest import make_instance, oo, rec


def fresh(config):
    return RunTrace(), _Budget(config)


def cma_config(**kw):
    base = dict(
        algorithm="cmaes", population_size=20, f_tol=0.0, x_tol=0.0,
        max_generations=200, max_restarts=1,
    )
    base.update(kw)
    return EvolutionConfig(**base)


class TestCmaEs:
    def test_sphere_10d(self):
        # standard sanity benchmark: best < 1e-6 within 200 generations
        successes = 0
        for seed in range(10):
            config = cma_config(seed=seed)
            trace, budget = fresh(config)
            _, best = cma_es_minimize(
                lambda x: float(np.sum(x**2)), np.ones(10), config,
                np.random.default_rng(seed), trace, budget,
            )
            successes += best < 1e-6
        assert successes >= 9

    def test_deterministic_trace(self):
        runs = []
        for _ in range(2):
            config = cma_config(seed=5, max_generations=30)
            trace, budget = fresh(config)
            x, best = cma_es_minimize(
                lambda x: float(np.sum((x - 1.0) ** 2)), np.full(4, 3.0), config,
                np.random.default_rng(5), trace, budget,
            )
            runs.append((best, tuple(x), tuple(trace.best_cost_per_generation)))
        assert runs[0] == runs[1]

    def test_trace_monotone_within_restart(self):
        config = cma_config(seed=2, max_generations=40, max_restarts=3)
        trace, budget = fresh(config)
        cma_es_minimize(
            lambda x: float(np.sum(x**2)), np.ones(5), config,
            np.random.default_rng(2), trace, budget,
        )
        assert trace.restarts == 3
        bounds = trace.restart_starts + [len(trace.best_cost_per_generation)]
        for lo, hi in zip(bounds, bounds[1:]):
            seg = trace.best_cost_per_generation[lo:hi]
            assert all(a >= b for a, b in zip(seg, seg[1:]))

    def test_f_tol_stops_flat_landscape(self):
        config = cma_config(seed=0, f_tol=1.0, max_generations=5000)
        trace, budget = fresh(config)
        cma_es_minimize(
            lambda x: 42.0, np.ones(3), config, np.random.default_rng(0), trace, budget
        )
        # window is ceil(10 * 3 / 20) = 2 generations of identical best values
        assert len(trace.best_cost_per_generation) == 2


class TestGa:
    def test_one_max_50_bits(self):
        successes = 0
        for seed in range(10):
            config = EvolutionConfig(
                algorithm="ga", population_size=100, max_generations=500,
                max_restarts=1, seed=seed,
            )
            trace, budget = fresh(config)
            _, best = ga_minimize(
                lambda g: float(50 - g.sum()), np.full(50, 2), config,
                np.random.default_rng(seed), trace, budget,
            )
            successes += best == 0.0
        assert successes >= 9

    def test_stall_stops_after_exactly_500_generations(self):
        # identical genomes and zero mutation: no improvement is possible,
        # so the run stops once 500 stalled generations accumulate
        config = EvolutionConfig(
            algorithm="ga", population_size=10, ga_mutation_rate=0.0,
            max_generations=10_000, max_restarts=1, seed=0,
        )
        trace, budget = fresh(config)
        ga_minimize(
            lambda g: float(g.sum()), np.ones(8, dtype=np.int64), config,
            np.random.default_rng(0), trace, budget,
        )
        assert len(trace.best_cost_per_generation) == 501

    def test_deterministic(self):
        outs = []
        for _ in range(2):
            config = EvolutionConfig(
                algorithm="ga", population_size=20, max_generations=50,
                max_restarts=1, seed=9,
            )
            trace, budget = fresh(config)
            x, best = ga_minimize(
                lambda g: float(np.sum((g - 3) ** 2)), np.full(6, 7), config,
                np.random.default_rng(9), trace, budget,
            )
            outs.append((best, tuple(x), tuple(trace.best_cost_per_generation)))
        assert outs[0] == outs[1]

    def test_restarts_counted(self):
        config = EvolutionConfig(
            algorithm="ga", population_size=10, ga_mutation_rate=0.0,
            max_generations=20, max_restarts=2, seed=0,
        )
        trace, budget = fresh(config)
        ga_minimize(
            lambda g: float(g.sum()), np.ones(4, dtype=np.int64), config,
            np.random.default_rng(0), trace, budget,
        )
        assert trace.restarts == 2
        assert len(trace.restart_starts) == 2


class TestGeneMapping:
    def test_floor_clamp_vector(self):
        genome = np.array([2.7, -3.1, 99.0, 4.999])
        n_options = np.array([5, 5, 5, 5])
        assert list(genome_to_candidate(genome, n_options)) == [2, 0, 4, 4]

    def test_uniform_genes_give_uniform_indices(self):
        rng = np.random.default_rng(13)
        n = 7
        samples = 100_000
        idx = genome_to_candidate(rng.uniform(0, n, size=samples), np.full(samples, n))
        counts = np.bincount(idx, minlength=n)
        expected = samples / n
        sigma = np.sqrt(samples * (1 / n) * (1 - 1 / n))
        assert np.all(np.abs(counts - expected) < 3 * sigma)


class TestArchive:
    def test_keeps_k_best_distinct(self):
        archive = TopKArchive(3)
        for cost in [5.0, 1.0, 5.0 + 1e-9, 9.0, 2.0, 0.5]:
            archive.add(cost, np.array([cost]))
        costs = [c for c, _ in archive.best()]
        assert costs == [0.5, 1.0, 2.0]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EvolutionConfig(population_size=2)
        with pytest.raises(ValueError):
            EvolutionConfig(algorithm="annealing")


class TestInstanceRuns:
    def test_zero_activity_instance_single_evaluation(self):
        inst = make_instance([])
        config = cma_config(seed=0)
        best, trace = run_cma_es(inst, config)
        from evosched.objective import Schedule, evaluate_schedule

        assert best.cost == pytest.approx(evaluate_schedule(inst, Schedule()).total)
        assert trace.evaluations == 1
        assert trace.best_cost_per_generation == [best.cost]

    def test_instance_run_deterministic_and_feasible(self):
        acts = [rec(0), rec(1), oo(2, value=300.0), oo(3, value=300.0, preds=(2,))]
        inst = make_instance(acts, rooms=2)
        results = []
        for _ in range(2):
            config = EvolutionConfig(
                algorithm="cmaes", population_size=8, max_generations=10,
                max_restarts=1, seed=3, f_tol=0.0, x_tol=0.0,
            )
            best, trace = run_cma_es(inst, config)
            results.append((best.cost, tuple(trace.best_cost_per_generation)))
        assert results[0] == results[1]
        assert results[0][0] < 200_000.0

    def test_ga_on_instance_with_archive(self):
        acts = [oo(0, value=300.0), oo(1, value=300.0)]
        inst = make_instance(acts, n_days=28)
        archive = TopKArchive(5)
        config = EvolutionConfig(
            algorithm="ga", population_size=10, max_generations=5,
            max_restarts=1, seed=1,
        )
        best, trace = run_ga(inst, config, archive=archive)
        assert archive.best()[0][0] == pytest.approx(best.cost)
        assert trace.evaluations == 10 + 4 * 8  # 2 parents kept, 8 children per generation
