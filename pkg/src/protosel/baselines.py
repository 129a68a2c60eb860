"""Reference selectors: random, farthest-first traversal, Kcentres, forward selection."""

from __future__ import annotations

import numpy as np

from .dissim import DissimilarityProvider
from .dspace import PrototypeSet
from .fitness import FitnessContext


def _pool(candidates, k: int) -> np.ndarray:
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1)
    if k < 1:
        raise ValueError("k must be >= 1")
    if candidates.size < k:
        raise ValueError(f"pool of {candidates.size} candidates is smaller than k={k}")
    if np.unique(candidates).size != candidates.size:
        raise ValueError("candidate pool contains duplicates")
    return candidates


def select_random(candidates, k: int, seed=0) -> PrototypeSet:
    candidates = _pool(candidates, k)
    rng = np.random.default_rng(seed)
    return PrototypeSet(rng.choice(candidates, k, replace=False), method="random", seed=_seed_value(seed))


def select_fft(provider: DissimilarityProvider, candidates, k: int, seed=0) -> PrototypeSet:
    """Farthest-first traversal from a random start.

    Each step adds the candidate whose distance to the nearest selected
    prototype is largest; ties go to the lowest candidate position. Uses
    one column of ``|candidates|`` evaluations per step.
    """
    candidates = _pool(candidates, k)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(candidates.size))
    chosen = [first]
    nearest = provider.block(candidates, candidates[[first]])[:, 0]
    nearest[first] = -np.inf
    trace = []
    for _ in range(k - 1):
        pos = int(np.argmax(nearest))
        trace.append(float(nearest[pos]))
        chosen.append(pos)
        nearest = np.minimum(nearest, provider.block(candidates, candidates[[pos]])[:, 0])
        nearest[chosen] = -np.inf
    return PrototypeSet(candidates[chosen], method="fft", seed=_seed_value(seed), fitness_trace=trace)


def covering_radius(provider: DissimilarityProvider, candidates, centers) -> float:
    """Largest distance from any candidate to its nearest center."""
    return float(provider.block(candidates, centers).min(axis=1).max())


def select_kcentres(provider: DissimilarityProvider, candidates, k: int, seed=0, max_iters: int = 50) -> PrototypeSet:
    """Alternate nearest-center assignment and per-cluster 1-center updates.

    Each cluster's new center is the member with the smallest maximum
    dissimilarity to the rest of the cluster; the current center is kept
    when it is among the minimizers, otherwise the lowest position wins.
    ``fitness_trace`` records the covering radius after every assignment,
    which never increases.
    """
    candidates = _pool(candidates, k)
    rng = np.random.default_rng(seed)
    centers = rng.choice(candidates.size, k, replace=False)  # positions into candidates
    trace = []
    for _ in range(max_iters):
        d = provider.block(candidates, candidates[centers])
        assign = np.argmin(d, axis=1)
        nearest = d[np.arange(candidates.size), assign]
        for j in range(k):
            if not np.any(assign == j):
                # re-seed with the worst-covered object
                worst = int(np.argmax(nearest))
                centers[j] = worst
                d[:, j] = provider.block(candidates, candidates[[worst]])[:, 0]
                assign = np.argmin(d, axis=1)
                nearest = d[np.arange(candidates.size), assign]
        trace.append(float(nearest.max()))
        changed = False
        for j in range(k):
            members = np.flatnonzero(assign == j)
            if members.size == 0:
                continue
            intra = provider.pairwise(candidates[members])
            radius = intra.max(axis=1)
            best = radius.min()
            current = np.flatnonzero(members == centers[j])
            if current.size and radius[current[0]] <= best:
                continue
            centers[j] = members[int(np.argmin(radius))]
            changed = True
        if not changed:
            break
    else:
        trace.append(covering_radius(provider, candidates, candidates[centers]))
    return PrototypeSet(
        candidates[centers], method="kcentres", seed=_seed_value(seed), fitness_trace=trace,
        params={"max_iters": max_iters},
    )


def select_forward(ctx: FitnessContext, candidates, k: int) -> PrototypeSet:
    """Greedy forward selection maximizing the supervised matching count.

    A candidate appended to the current set becomes an object's nearest
    prototype only when strictly closer than the existing ones, matching
    the lowest-position tie rule of the supervised criterion. Ties between
    candidates go to the lowest candidate position.
    """
    candidates = _pool(candidates, k)
    if ctx.n == 0:
        raise ValueError("empty validation set")
    d = ctx.provider.block(ctx.validation_indices, candidates)
    proto_labels = ctx.prototype_labels(candidates)
    match = proto_labels[None, :] == ctx.validation_labels[:, None]
    best_d = np.full(ctx.n, np.inf)
    best_match = np.zeros(ctx.n, dtype=bool)
    chosen: list[int] = []
    trace = []
    for _ in range(k):
        closer = d < best_d[:, None]
        scores = np.where(closer, match, best_match[:, None]).sum(axis=0)
        scores[chosen] = -1
        pos = int(np.argmax(scores))
        chosen.append(pos)
        trace.append(float(scores[pos]))
        update = closer[:, pos]
        best_d[update] = d[update, pos]
        best_match[update] = match[update, pos]
    return PrototypeSet(candidates[chosen], method="forward", fitness_trace=trace)


def _seed_value(seed):
    return seed if isinstance(seed, (int, np.integer)) else None
