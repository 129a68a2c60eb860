"""Scalable genetic algorithm for fixed-cardinality prototype selection.

An individual is a k-vector of object indices. Optionally the candidates
are first split into k clusters by a single nearest-center assignment to
random centers, and gene ``j`` is then restricted to cluster ``j``. Each
generation every non-elite individual takes each gene from the best
individual with probability ``rp`` and then mutates each gene with
probability ``mp``. The best individual is carried over unchanged and is
the only parent.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dissim import DissimilarityProvider
from .dspace import PrototypeSet
from .errors import ClusteringError
from .fitness import FITNESS_FUNCTIONS, FitnessContext

log = logging.getLogger(__name__)

MAX_REDRAWS = 32


@dataclass(eq=False)
class Individual:
    genes: np.ndarray
    cached_fitness: float | None = None

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=np.int64).reshape(-1)

    @property
    def k(self) -> int:
        return int(self.genes.size)

    def copy(self) -> Individual:
        return Individual(self.genes.copy(), self.cached_fitness)


@dataclass(frozen=True)
class GaParams:
    """Defaults follow the reported experimental setup: 20 individuals,
    per-gene reproduction 0.5, per-gene mutation 0.02, 20 generations."""

    population_size: int = 20
    reproduction_prob: float = 0.5
    mutation_prob: float = 0.02
    generations: int = 20
    use_clustering: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("reproduction_prob", "mutation_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass
class ClusterAssignment:
    """One-pass nearest-center partition of the candidate pool.

    ``membership[a]`` is the cluster of ``candidates[a]``.
    """

    candidates: np.ndarray
    center_indices: np.ndarray
    membership: np.ndarray
    redraws: int = 0
    _members: list = field(default_factory=list, init=False, repr=False)
    _lookup: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        k = self.center_indices.size
        order = np.argsort(self.membership, kind="stable")
        bounds = np.searchsorted(self.membership[order], np.arange(k + 1))
        self._members = [self.candidates[order[bounds[j] : bounds[j + 1]]] for j in range(k)]
        self._lookup = dict(zip(self.candidates.tolist(), self.membership.tolist()))

    @property
    def k(self) -> int:
        return int(self.center_indices.size)

    def members(self, j: int) -> np.ndarray:
        return self._members[j]

    def cluster_of(self, index: int) -> int:
        return self._lookup[int(index)]


def cluster_candidates(provider: DissimilarityProvider, candidates, k: int, seed=0, max_redraws: int = 10) -> ClusterAssignment:
    """Assign every candidate to the nearest of ``k`` random centers.

    Ties go to the lowest center position. If some cluster ends up empty
    (only possible with duplicate objects) the centers are redrawn.
    """
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1)
    if k < 1 or candidates.size < k:
        raise ValueError(f"need 1 <= k <= |candidates|, got k={k}, |candidates|={candidates.size}")
    rng = np.random.default_rng(seed)
    for attempt in range(max_redraws + 1):
        centers = rng.choice(candidates, k, replace=False)
        membership = np.argmin(provider.block(candidates, centers), axis=1)
        if np.bincount(membership, minlength=k).min() > 0:
            return ClusterAssignment(candidates, centers, membership, redraws=attempt)
    raise ClusteringError(f"could not form {k} nonempty clusters after {max_redraws} redraws")


def _draw(j: int, clusters: ClusterAssignment | None, candidates, rng) -> int:
    pool = clusters.members(j) if clusters is not None else candidates
    return int(pool[rng.integers(pool.size)])


def repair(genes: np.ndarray, fixed: np.ndarray, rng, clusters=None, candidates=None) -> np.ndarray:
    """Make genes distinct by redrawing the colliding non-fixed positions.

    Fixed positions keep their value. A colliding gene is redrawn from its
    cluster (or the pool) up to ``MAX_REDRAWS`` times, then replaced by
    the lowest unused index of that cluster, and failing that of the pool.
    """
    genes = genes.copy()
    used = set(genes[fixed].tolist())
    for j in np.flatnonzero(~fixed):
        g = int(genes[j])
        if g not in used:
            used.add(g)
            continue
        if clusters is None and candidates is None:
            raise ValueError("duplicate genes and no pool to repair from")
        for _ in range(MAX_REDRAWS):
            g = _draw(j, clusters, candidates, rng)
            if g not in used:
                break
        else:
            g = None
            pools = [clusters.members(j)] if clusters is not None else []
            if candidates is not None:
                pools.append(candidates)
            for pool in pools:
                free = [c for c in np.sort(pool).tolist() if c not in used]
                if free:
                    g = free[0]
                    break
            if g is None:
                raise ValueError("candidate pool too small to repair individual")
            log.debug("gene %d repaired by lowest-unused fallback", j)
        genes[j] = g
        used.add(g)
    return genes


def init_population(clusters: ClusterAssignment | None, candidates, k: int, size: int, seed=0) -> list[Individual]:
    """``size`` random individuals; gene ``j`` from cluster ``j`` when clustered."""
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1)
    rng = np.random.default_rng(seed)
    population = []
    for _ in range(size):
        if clusters is None:
            if candidates.size < k:
                raise ValueError(f"pool of {candidates.size} is smaller than k={k}")
            genes = rng.choice(candidates, k, replace=False)
        else:
            if clusters.k != k:
                raise ValueError(f"clustering has {clusters.k} clusters, need k={k}")
            genes = np.array([_draw(j, clusters, None, rng) for j in range(k)])
        population.append(Individual(genes))
    return population


def reproduce(best: Individual, current: Individual, rp: float, rng, clusters=None, candidates=None) -> Individual:
    """Uniform crossover with the best individual.

    Genes taken from ``best`` are kept; any gene retained from ``current``
    that collides with them is repaired. Under the cluster constraint gene
    ``j`` of both parents lies in cluster ``j``, so the child is already
    valid.
    """
    if best.k != current.k:
        raise ValueError("parents differ in k")
    take = rng.random(current.k) < rp
    genes = np.where(take, best.genes, current.genes)
    genes = repair(genes, take, rng, clusters, candidates)
    return Individual(genes)


def mutate(ind: Individual, mp: float, clusters=None, rng=None, candidates=None) -> Individual:
    """Redraw each gene with probability ``mp`` from its cluster or the pool."""
    rng = np.random.default_rng() if rng is None else rng
    if clusters is None and candidates is None:
        raise ValueError("mutation needs either clusters or a candidate pool")
    hit = rng.random(ind.k) < mp
    if not hit.any():
        return Individual(ind.genes.copy(), ind.cached_fitness)
    genes = ind.genes.copy()
    for j in np.flatnonzero(hit):
        genes[j] = _draw(j, clusters, candidates, rng)
    return Individual(repair(genes, ~hit, rng, clusters, candidates))


def _resolve_fitness(fitness):
    if callable(fitness):
        return fitness, getattr(fitness, "__name__", "custom")
    try:
        return FITNESS_FUNCTIONS[fitness], fitness
    except KeyError:
        raise ValueError(f"unknown fitness {fitness!r}; expected one of {sorted(FITNESS_FUNCTIONS)}") from None


def _evaluate(population, fn, ctx, workers: int) -> None:
    todo = [ind for ind in population if ind.cached_fitness is None]
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda ind: fn(ind, ctx), todo))
    else:
        values = [fn(ind, ctx) for ind in todo]
    for ind, value in zip(todo, values):
        ind.cached_fitness = float(value)


def run_ga(
    ctx: FitnessContext,
    fitness,
    params: GaParams,
    candidates,
    k: int,
    workers: int = 1,
    callback=None,
) -> PrototypeSet:
    """Evolve prototype sets and return the best one found.

    Args:
        ctx: fitness context (provider, validation set, optional pivots).
        fitness: ``"mst"``, ``"supervised"``, ``"supervised_lsh"`` or a
            callable ``f(individual, ctx) -> float``.
        params: GA parameters, including the master seed.
        candidates: object indices prototypes may be drawn from.
        k: number of prototypes.
        workers: threads used to evaluate a population.
        callback: optional ``f(generation, population, best, clusters)``
            called after the initial evaluation (generation 0) and after
            every generation.

    The returned ``fitness_trace`` has one entry per generation (the
    initial population is generation 0 and is not in the trace).
    """
    fn, fitness_name = _resolve_fitness(fitness)
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1)
    if candidates.size == 0:
        raise ValueError("empty candidate pool")
    if candidates.size < k:
        raise ValueError(f"pool of {candidates.size} is smaller than k={k}")

    root = np.random.SeedSequence(params.seed)
    cluster_seq, init_seq, evolve_seq = root.spawn(3)
    clusters = None
    if params.use_clustering:
        clusters = cluster_candidates(ctx.provider, candidates, k, np.random.default_rng(cluster_seq))
    population = init_population(clusters, candidates, k, params.population_size, np.random.default_rng(init_seq))

    _evaluate(population, fn, ctx, workers)
    best_pos = 0
    for pos, ind in enumerate(population):
        if ind.cached_fitness > population[best_pos].cached_fitness:
            best_pos = pos
    best = population[best_pos]
    if callback is not None:
        callback(0, population, best, clusters)

    trace = []
    for gen, gen_seq in enumerate(evolve_seq.spawn(params.generations), start=1):
        rng = np.random.default_rng(gen_seq)
        offspring = []
        for pos, ind in enumerate(population):
            if pos == best_pos:
                offspring.append(best)
                continue
            child = reproduce(best, ind, params.reproduction_prob, rng, clusters, candidates)
            child = mutate(child, params.mutation_prob, clusters, rng, candidates)
            offspring.append(child)
        population = offspring
        _evaluate(population, fn, ctx, workers)
        for pos, ind in enumerate(population):
            if ind.cached_fitness > best.cached_fitness:
                best, best_pos = ind, pos
        trace.append(best.cached_fitness)
        if callback is not None:
            callback(gen, population, best, clusters)

    method = f"ga-{fitness_name}" + ("-clust" if params.use_clustering else "")
    return PrototypeSet(
        best.genes.copy(),
        method=method,
        seed=params.seed,
        fitness_trace=trace,
        params={
            "population_size": params.population_size,
            "reproduction_prob": params.reproduction_prob,
            "mutation_prob": params.mutation_prob,
            "generations": params.generations,
            "use_clustering": params.use_clustering,
        },
    )
