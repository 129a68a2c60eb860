"""Selection criteria maximized by the genetic algorithm.

* :func:`fitness_mst` scores prototype diversity as the weight of the
  minimum spanning tree over the prototypes. It only touches the ``k``
  genes, never the validation set, so its cost does not depend on ``|V|``.
* :func:`fitness_supervised` counts validation objects whose nearest
  prototype carries their label.
* :func:`fitness_supervised_lsh` does the same count but finds nearest
  prototypes in a pivot-dissimilarity space (see :mod:`protosel.hashing`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dissim import DissimilarityProvider
from .errors import StaleAcceleratorError


@dataclass
class FitnessContext:
    """Everything a criterion needs besides the individual.

    ``labels`` optionally holds the label of every object in the provider's
    index space. Without it, prototype labels are looked up through the
    validation set, so prototypes must then be drawn from ``V``.
    """

    provider: DissimilarityProvider
    validation_indices: np.ndarray
    validation_labels: np.ndarray
    accelerator: object | None = None
    labels: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.validation_indices = np.asarray(self.validation_indices, dtype=np.int64).reshape(-1)
        self.validation_labels = np.asarray(self.validation_labels)
        if self.validation_labels.shape != self.validation_indices.shape:
            raise ValueError("validation_labels must align with validation_indices")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)

    @property
    def n(self) -> int:
        return int(self.validation_indices.size)

    def prototype_labels(self, genes: np.ndarray) -> np.ndarray:
        if self.labels is not None:
            return self.labels[genes]
        lookup = self._cache.get("label_of")
        if lookup is None:
            lookup = dict(zip(self.validation_indices.tolist(), self.validation_labels.tolist()))
            self._cache["label_of"] = lookup
        try:
            return np.asarray([lookup[g] for g in genes.tolist()])
        except KeyError as exc:
            raise ValueError(f"no label known for prototype {exc.args[0]}") from None

    def validation_codes(self) -> np.ndarray:
        """Pivot codes of V, computed once per context."""
        codes = self._cache.get("codes_V")
        if codes is None:
            codes = self.accelerator.codes_for(self.validation_indices)
            self._cache["codes_V"] = codes
        return codes


def genes_of(individual) -> np.ndarray:
    """Accept an Individual, a PrototypeSet or a plain index sequence."""
    for attr in ("genes", "indices"):
        if hasattr(individual, attr):
            individual = getattr(individual, attr)
            break
    return np.asarray(individual, dtype=np.int64).reshape(-1)


def prim_tree_weight(weights: np.ndarray) -> float:
    """Total weight of the minimum spanning tree of a complete graph.

    Dense Prim: grow the tree from node 0, each round attaching the
    outside node with the cheapest edge into the tree.
    """
    k = weights.shape[0]
    if k < 2:
        return 0.0
    in_tree = np.zeros(k, dtype=bool)
    in_tree[0] = True
    best = weights[0].astype(np.float64).copy()
    best[0] = np.inf
    total = 0.0
    for _ in range(k - 1):
        nxt = int(np.argmin(best))
        total += best[nxt]
        in_tree[nxt] = True
        best = np.minimum(best, weights[nxt])
        best[in_tree] = np.inf
    return float(total)


def fitness_mst(individual, ctx: FitnessContext) -> float:
    genes = genes_of(individual)
    if genes.size < 2:
        raise ValueError("MST fitness needs at least 2 prototypes")
    if np.unique(genes).size != genes.size:
        raise ValueError(f"duplicate genes in individual {genes.tolist()}")
    return prim_tree_weight(ctx.provider.pairwise(genes))


def _count_matches(nearest: np.ndarray, genes: np.ndarray, ctx: FitnessContext) -> int:
    proto_labels = ctx.prototype_labels(genes)
    return int(np.count_nonzero(proto_labels[nearest] == ctx.validation_labels))


def fitness_supervised(individual, ctx: FitnessContext) -> int:
    genes = genes_of(individual)
    if genes.size < 1:
        raise ValueError("supervised fitness needs at least 1 prototype")
    if ctx.n == 0:
        raise ValueError("empty validation set")
    d = ctx.provider.block(ctx.validation_indices, genes)
    # argmin returns the first minimum: ties go to the lowest gene position
    return _count_matches(np.argmin(d, axis=1), genes, ctx)


def fitness_supervised_lsh(individual, ctx: FitnessContext) -> int:
    from .hashing import approx_nearest_prototype

    genes = genes_of(individual)
    if genes.size < 1:
        raise ValueError("supervised fitness needs at least 1 prototype")
    if ctx.n == 0:
        raise ValueError("empty validation set")
    table = ctx.accelerator
    if table is None:
        raise StaleAcceleratorError("no pivot table attached to the fitness context")
    if table.dataset_revision != ctx.provider.revision:
        raise StaleAcceleratorError(
            f"pivot table built for revision {table.dataset_revision}, "
            f"provider is {ctx.provider.revision}"
        )
    nearest = approx_nearest_prototype(ctx.validation_codes(), table.codes_for(genes))
    return _count_matches(nearest, genes, ctx)


FITNESS_FUNCTIONS = {
    "mst": fitness_mst,
    "supervised": fitness_supervised,
    "supervised_lsh": fitness_supervised_lsh,
}
