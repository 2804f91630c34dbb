"""Evolutionary search over schedule genomes: CMA-ES and a genetic algorithm.

Both optimizers work on a per-gene option-count vector: CMA-ES samples real
vectors in a normalized [0, 1]^d box that is scaled to option space before
evaluation, the GA works on integer genes directly. Stopping follows the
tuned tolerances (f spread < 100, step spread < 1 gene for CMA-ES; no
improvement > 1 for 500 generations for the GA) and both restart with a
fresh population until the budget runs out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .decode import Decoder
from .model import Instance, SeriesFrame

CMAES = "cmaes"
GA = "ga"


@dataclass
class EvolutionConfig:
    algorithm: str = CMAES
    population_size: int = 100
    sigma0: float = 0.5
    f_tol: float = 100.0
    x_tol: float = 1.0
    ga_parent_fraction: float = 0.10
    ga_stall_generations: int = 500
    ga_stall_epsilon: float = 1.0
    ga_mutation_rate: float | None = None  # default 1/genome_length
    seed: int = 0
    time_budget_s: float | None = None
    max_restarts: int = 1
    max_generations: int = 10_000

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if not 0 < self.ga_parent_fraction <= 1:
            raise ValueError("ga_parent_fraction must be in (0, 1]")
        if self.algorithm not in (CMAES, GA):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class RunTrace:
    best_cost_per_generation: list[float] = field(default_factory=list)
    restart_starts: list[int] = field(default_factory=list)  # indices into the trace
    evaluations: int = 0
    restarts: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("generation,best_cost\n")
            for g, c in enumerate(self.best_cost_per_generation):
                fh.write(f"{g},{float(c)!r}\n")


def genome_to_candidate(genome: np.ndarray, n_options: np.ndarray) -> np.ndarray:
    """floor + clamp each gene into its option range."""
    return np.clip(np.floor(genome).astype(np.int64), 0, np.asarray(n_options) - 1)


class TopKArchive:
    """Keeps the K best (cost, genome) pairs seen, distinct by cost."""

    def __init__(self, k: int, cost_tol: float = 1e-6):
        self.k = k
        self.cost_tol = cost_tol
        self.entries: list[tuple[float, np.ndarray]] = []

    def add(self, cost: float, genome: np.ndarray) -> None:
        if any(abs(cost - c) <= self.cost_tol for c, _ in self.entries):
            return
        self.entries.append((cost, np.array(genome, dtype=float)))
        self.entries.sort(key=lambda e: e[0])
        del self.entries[self.k:]

    def best(self) -> list[tuple[float, np.ndarray]]:
        return list(self.entries)


class _Budget:
    def __init__(self, config: EvolutionConfig):
        self.deadline = (
            time.monotonic() + config.time_budget_s if config.time_budget_s else None
        )
        self.max_restarts = config.max_restarts

    def allows_restart(self, restarts_done: int) -> bool:
        if self.deadline is not None:
            return time.monotonic() < self.deadline
        return restarts_done < self.max_restarts

    def expired(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline


# ---------------------------------------------------------------------------
# CMA-ES
# ---------------------------------------------------------------------------

def cma_es_minimize(
    fn,
    scales: np.ndarray,
    config: EvolutionConfig,
    rng: np.random.Generator,
    trace: RunTrace,
    budget: _Budget,
) -> tuple[np.ndarray, float]:
    """(mu/mu_w, lambda) CMA-ES with restarts; fn is called on option-space vectors.

    Search coordinates live in [0, 1]^d and are multiplied by `scales`
    (the per-gene option counts) before evaluation.
    """
    d = len(scales)
    lam = config.population_size
    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w**2)
    cc = (4 + mu_eff / d) / (d + 4 + 2 * mu_eff / d)
    cs = (mu_eff + 2) / (d + mu_eff + 5)
    c1 = 2 / ((d + 1.3) ** 2 + mu_eff)
    cmu = min(1 - c1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((d + 2) ** 2 + mu_eff))
    damps = 1 + 2 * max(0.0, np.sqrt((mu_eff - 1) / (d + 1)) - 1) + cs
    chi_n = np.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d**2))
    f_window = max(1, int(np.ceil(10 * d / lam)))

    best_x, best_f = None, np.inf
    restarts = 0
    while True:
        mean = np.full(d, 0.5) if restarts == 0 else rng.uniform(0.0, 1.0, size=d)
        sigma = config.sigma0
        C = np.eye(d)
        p_sigma = np.zeros(d)
        p_c = np.zeros(d)
        recent_best: list[float] = []
        trace.restart_starts.append(len(trace.best_cost_per_generation))
        run_best = np.inf
        gen = 0
        while gen < config.max_generations and not budget.expired():
            gen += 1
            try:
                eigvals, B = np.linalg.eigh(C)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(eigvals)) or eigvals.min() <= 0:
                break
            if eigvals.max() / eigvals.min() > 1e14:
                break
            D = np.sqrt(eigvals)
            z = rng.standard_normal((lam, d))
            y = z @ (B * D).T  # rows: B @ diag(D) @ z_i
            xs = mean + sigma * y
            fs = np.array([fn(x * scales) for x in xs])
            trace.evaluations += lam
            order = np.argsort(fs, kind="stable")
            if fs[order[0]] < run_best:
                run_best = float(fs[order[0]])
            if fs[order[0]] < best_f:
                best_f = float(fs[order[0]])
                best_x = xs[order[0]] * scales
            trace.best_cost_per_generation.append(run_best)

            y_w = w @ y[order[:mu]]
            mean = mean + sigma * y_w
            # step-size path uses C^(-1/2) y_w
            c_inv_half = B @ np.diag(1.0 / D) @ B.T
            p_sigma = (1 - cs) * p_sigma + np.sqrt(cs * (2 - cs) * mu_eff) * (
                c_inv_half @ y_w
            )
            h_sigma = float(
                np.linalg.norm(p_sigma)
                / np.sqrt(1 - (1 - cs) ** (2 * gen))
                / chi_n
                < 1.4 + 2 / (d + 1)
            )
            p_c = (1 - cc) * p_c + h_sigma * np.sqrt(cc * (2 - cc) * mu_eff) * y_w
            rank_mu = (y[order[:mu]].T * w) @ y[order[:mu]]
            C = (
                (1 - c1 - cmu) * C
                + c1 * (np.outer(p_c, p_c) + (1 - h_sigma) * cc * (2 - cc) * C)
                + cmu * rank_mu
            )
            sigma = sigma * np.exp(cs / damps * (np.linalg.norm(p_sigma) / chi_n - 1))
            if not np.isfinite(sigma) or sigma > 1e6:
                break

            recent_best.append(float(fs[order[0]]))
            if len(recent_best) > f_window:
                recent_best.pop(0)
            if len(recent_best) == f_window and (
                max(recent_best) - min(recent_best) < config.f_tol
            ):
                break
            if sigma * np.max(np.sqrt(np.diag(C)) * scales) < config.x_tol:
                break
        restarts += 1
        if not budget.allows_restart(restarts):
            break
    trace.restarts = restarts
    return best_x, best_f


# ---------------------------------------------------------------------------
# GA
# ---------------------------------------------------------------------------

def ga_minimize(
    fn,
    n_options: np.ndarray,
    config: EvolutionConfig,
    rng: np.random.Generator,
    trace: RunTrace,
    budget: _Budget,
) -> tuple[np.ndarray, float]:
    """Integer-gene GA: truncation selection, single-point crossover,
    uniform reset mutation at rate 1/genome_length, parents kept."""
    n_options = np.asarray(n_options, dtype=np.int64)
    d = len(n_options)
    lam = config.population_size
    n_parents = max(2, int(round(config.ga_parent_fraction * lam)))
    if config.ga_mutation_rate is not None:
        mut_rate = config.ga_mutation_rate
    else:
        mut_rate = 1.0 / d if d else 0.0

    best_x, best_f = None, np.inf
    restarts = 0
    while True:
        pop = rng.integers(0, n_options, size=(lam, d))
        fs = np.array([fn(ind) for ind in pop])
        trace.evaluations += lam
        trace.restart_starts.append(len(trace.best_cost_per_generation))
        run_best = float(fs.min())
        trace.best_cost_per_generation.append(run_best)
        if run_best < best_f:
            best_f = run_best
            best_x = pop[np.argmin(fs)].copy()
        stall_anchor, stall = run_best, 0
        gen = 1
        while gen < config.max_generations and not budget.expired():
            gen += 1
            order = np.argsort(fs, kind="stable")
            parents = pop[order[:n_parents]]
            parent_fs = fs[order[:n_parents]]
            n_children = lam - n_parents
            pairs = rng.integers(0, n_parents, size=(n_children, 2))
            cuts = rng.integers(1, d, size=n_children) if d > 1 else np.zeros(n_children, dtype=int)
            children = np.empty((n_children, d), dtype=np.int64)
            for i in range(n_children):
                a, b = parents[pairs[i, 0]], parents[pairs[i, 1]]
                children[i, : cuts[i]] = a[: cuts[i]]
                children[i, cuts[i]:] = b[cuts[i]:]
            mut_mask = rng.random((n_children, d)) < mut_rate
            resets = rng.integers(0, n_options, size=(n_children, d))
            children = np.where(mut_mask, resets, children)
            child_fs = np.array([fn(ind) for ind in children])
            trace.evaluations += n_children
            pop = np.vstack([parents, children])
            fs = np.concatenate([parent_fs, child_fs])
            gen_best = float(fs.min())
            if gen_best < run_best:
                run_best = gen_best
            trace.best_cost_per_generation.append(run_best)
            if gen_best < best_f:
                best_f = gen_best
                best_x = pop[np.argmin(fs)].copy()
            if stall_anchor - run_best > config.ga_stall_epsilon:
                stall_anchor, stall = run_best, 0
            else:
                stall += 1
                if stall >= config.ga_stall_generations:
                    break
        restarts += 1
        if not budget.allows_restart(restarts):
            break
    trace.restarts = restarts
    return best_x, best_f


# ---------------------------------------------------------------------------
# Instance-level entry points
# ---------------------------------------------------------------------------

def _run(
    instance: Instance,
    config: EvolutionConfig,
    evaluator,
    load_forecast: SeriesFrame | None,
    archive: TopKArchive | None = None,
):
    decoder = (
        evaluator if isinstance(evaluator, Decoder)
        else Decoder(instance, load_forecast=load_forecast)
    )
    rng = np.random.default_rng(config.seed)
    trace = RunTrace()
    budget = _Budget(config)
    if decoder.layout.n_genes == 0:
        best = decoder.evaluate(np.zeros(0))
        trace.best_cost_per_generation.append(best.cost)
        trace.restart_starts.append(0)
        trace.evaluations = 1
        trace.restarts = 1
        if archive is not None:
            archive.add(best.cost, np.zeros(0))
        return best, trace
    if archive is None:
        fn = lambda genome: decoder.evaluate(genome).cost
    else:
        def fn(genome):
            cost = decoder.evaluate(genome).cost
            archive.add(cost, genome)
            return cost
    if config.algorithm == CMAES:
        scales = decoder.layout.n_options.astype(float)
        best_x, _ = cma_es_minimize(fn, scales, config, rng, trace, budget)
    else:
        best_x, _ = ga_minimize(
            fn, decoder.layout.n_options, config, rng, trace, budget
        )
    best = decoder.evaluate(np.asarray(best_x, dtype=float))
    return best, trace


def run_cma_es(
    instance: Instance,
    config: EvolutionConfig,
    evaluator: Decoder | None = None,
    load_forecast: SeriesFrame | None = None,
    archive: TopKArchive | None = None,
):
    config.algorithm = CMAES
    return _run(instance, config, evaluator, load_forecast, archive)


def run_ga(
    instance: Instance,
    config: EvolutionConfig,
    evaluator: Decoder | None = None,
    load_forecast: SeriesFrame | None = None,
    archive: TopKArchive | None = None,
):
    config.algorithm = GA
    return _run(instance, config, evaluator, load_forecast, archive)
