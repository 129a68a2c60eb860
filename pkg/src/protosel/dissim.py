"""Dissimilarity measures and the providers that evaluate them.

Three evaluation strategies share one interface:

* :class:`OnDemandProvider` computes ``d`` from raw measurements every time.
* :class:`CachedProvider` adds a bounded LRU memo keyed on unordered pairs.
* :class:`PrecomputedProvider` serves lookups from an ``n x n`` matrix.

Every provider keeps an ``eval_count`` of genuine measure evaluations.
Diagonal entries ``d(i, i)`` are returned as 0 without evaluation, and cache
hits or table lookups are not counted.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .dataset import Dataset, load_binary
from .errors import MemoryBudgetError

DEFAULT_MEMORY_BUDGET = 1 << 30  # bytes


@dataclass(frozen=True)
class Measure:
    """A Minkowski-family dissimilarity.

    ``kind`` is one of ``"euclidean"``, ``"manhattan"`` or ``"minkowski"``;
    the exponent ``p`` only matters for the last one.
    """

    kind: str = "euclidean"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "manhattan", "minkowski"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "minkowski" and not self.p >= 1:
            raise ValueError(f"minkowski exponent must be >= 1, got {self.p}")

    @classmethod
    def parse(cls, text: str) -> Measure:
        """Parse ``euclidean``, ``manhattan`` or ``minkowski:<p>``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "minkowski":
            return cls("minkowski", float(arg) if arg else 2.0)
        return cls(kind)

    def __str__(self):
        return f"minkowski:{self.p:g}" if self.kind == "minkowski" else self.kind

    def _scipy_args(self):
        if self.kind == "euclidean":
            return "euclidean", {}
        if self.kind == "manhattan":
            return "cityblock", {}
        return "minkowski", {"p": self.p}

    def cross(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """All-pairs dissimilarities between the rows of ``a`` and ``b``."""
        metric, kw = self._scipy_args()
        return cdist(a, b, metric, **kw)

    def condensed(self, a: np.ndarray) -> np.ndarray:
        metric, kw = self._scipy_args()
        return pdist(a, metric, **kw)

    def paired(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Row-wise dissimilarities ``d(a[i], b[i])``."""
        diff = np.abs(a - b)
        if self.kind == "euclidean":
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.kind == "manhattan":
            return diff.sum(axis=1)
        return (diff**self.p).sum(axis=1) ** (1.0 / self.p)


def _as_index_array(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        bad = idx[(idx < 0) | (idx >= n)][0]
        raise IndexError(f"object index {bad} out of range for n={n}")
    return idx


class DissimilarityProvider:
    """Common interface. Subclasses implement ``_block`` and ``_pairs``."""

    def __init__(self, n: int, revision: str):
        self.n = n
        self.revision = revision
        self._eval_count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def _count(self, amount: int) -> None:
        if amount:
            with self._lock:
                self._eval_count += int(amount)

    def dist(self, i: int, j: int) -> float:
        return float(self.block([i], [j])[0, 0])

    def block(self, rows, cols) -> np.ndarray:
        """Matrix with entry ``(a, b) = d(rows[a], cols[b])``."""
        rows = _as_index_array(rows, self.n)
        cols = _as_index_array(cols, self.n)
        if rows.size == 0 or cols.size == 0:
            return np.zeros((rows.size, cols.size))
        return self._block(rows, cols)

    def pairwise(self, indices) -> np.ndarray:
        """Symmetric matrix among ``indices``, evaluating each unordered pair once."""
        idx = _as_index_array(indices, self.n)
        if idx.size < 2:
            return np.zeros((idx.size, idx.size))
        return self._pairs(idx)

    def _block(self, rows, cols):
        raise NotImplementedError

    def _pairs(self, idx):
        raise NotImplementedError


class OnDemandProvider(DissimilarityProvider):
    """Computes dissimilarities from the raw measurements of a dataset."""

    def __init__(self, dataset: Dataset, measure: Measure | None = None):
        self.dataset = dataset
        self.measure = measure or Measure()
        super().__init__(dataset.n, f"{dataset.revision}:{self.measure}")

    def _block(self, rows, cols):
        x = self.dataset.objects
        out = self.measure.cross(x[rows], x[cols])
        same = rows[:, None] == cols[None, :]
        out[same] = 0.0
        self._count(out.size - int(same.sum()))
        return out

    def _pairs(self, idx):
        x = self.dataset.objects
        condensed = self.measure.condensed(x[idx])
        k = idx.size
        iu, ju = np.triu_indices(k, 1)
        same = idx[iu] == idx[ju]
        condensed[same] = 0.0
        self._count(condensed.size - int(same.sum()))
        return squareform(condensed, checks=False)


class CachedProvider(OnDemandProvider):
    """On-demand provider with a bounded LRU memo over unordered pairs.

    Concurrent insertion is last-writer-wins; values are deterministic so
    this never changes a result.
    """

    def __init__(self, dataset: Dataset, measure: Measure | None = None, capacity: int = 1_000_000):
        super().__init__(dataset, measure)
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self._cache: OrderedDict[tuple[int, int], float] = OrderedDict()
        self._cache_lock = threading.Lock()
        self.hits = 0

    def _lookup(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        out = np.zeros(lo.size)
        missing = []
        with self._cache_lock:
            for pos, key in enumerate(zip(lo.tolist(), hi.tolist())):
                if key[0] == key[1]:
                    continue
                value = self._cache.get(key)
                if value is None:
                    missing.append(pos)
                else:
                    self._cache.move_to_end(key)
                    out[pos] = value
                    self.hits += 1
        if missing:
            missing = np.asarray(missing)
            # several positions may share one key; evaluate each key once
            keys, inverse = np.unique(
                np.stack([lo[missing], hi[missing]], axis=1), axis=0, return_inverse=True
            )
            x = self.dataset.objects
            values = self.measure.paired(x[keys[:, 0]], x[keys[:, 1]])
            self._count(len(keys))
            out[missing] = values[inverse.reshape(-1)]
            with self._cache_lock:
                for (i, j), v in zip(keys.tolist(), values.tolist()):
                    self._cache[(i, j)] = v
                    self._cache.move_to_end((i, j))
                while len(self._cache) > self.capacity:
                    self._cache.popitem(last=False)
        return out

    def _block(self, rows, cols):
        r = np.repeat(rows, cols.size)
        c = np.tile(cols, rows.size)
        return self._lookup(r, c).reshape(rows.size, cols.size)

    def _pairs(self, idx):
        iu, ju = np.triu_indices(idx.size, 1)
        return squareform(self._lookup(idx[iu], idx[ju]), checks=False)


class PrecomputedProvider(DissimilarityProvider):
    """Serves dissimilarities from a square matrix; lookups are not counted."""

    def __init__(self, matrix: np.ndarray, revision: str | None = None, atol: float = 1e-9):
        matrix = np.asarray(matrix, dtype=np.float64)
        validate_matrix(matrix, atol)
        if revision is None:
            revision = "matrix:" + hashlib.sha256(matrix.tobytes()).hexdigest()[:16]
        matrix = matrix.copy()
        matrix.setflags(write=False)
        self.matrix = matrix
        super().__init__(matrix.shape[0], revision)

    def _block(self, rows, cols):
        return self.matrix[np.ix_(rows, cols)].copy()

    def _pairs(self, idx):
        return self.matrix[np.ix_(idx, idx)].copy()


def validate_matrix(matrix: np.ndarray, atol: float = 1e-9) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"dissimilarity matrix must be square, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("dissimilarity matrix has non-finite entries")
    if np.any(np.abs(np.diag(matrix)) > atol):
        raise ValueError("dissimilarity matrix diagonal is not zero")
    if np.any(np.abs(matrix - matrix.T) > atol):
        raise ValueError("dissimilarity matrix is not symmetric")
    if np.any(matrix < -atol):
        raise ValueError("dissimilarity matrix has negative entries")


def dist(provider: DissimilarityProvider, i: int, j: int) -> float:
    return provider.dist(i, j)


def dist_block(provider: DissimilarityProvider, rows, cols) -> np.ndarray:
    return provider.block(rows, cols)


def precompute(
    ds: Dataset,
    measure: Measure | None = None,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    chunk: int = 2048,
) -> PrecomputedProvider:
    """Materialize the full matrix, refusing if it would exceed ``memory_budget`` bytes.

    The result reports the same revision as an on-demand provider over the
    same data and measure, so pivot tables built on either are interchangeable.
    """
    needed = ds.n * ds.n * 8
    if needed > memory_budget:
        raise MemoryBudgetError(
            f"{ds.n}x{ds.n} matrix needs {needed} bytes, budget is {memory_budget}"
        )
    source = OnDemandProvider(ds, measure)
    matrix = np.empty((ds.n, ds.n))
    everything = np.arange(ds.n)
    for start in range(0, ds.n, chunk):
        rows = everything[start : start + chunk]
        matrix[rows] = source.block(rows, everything)
    provider = PrecomputedProvider(matrix, revision=source.revision)
    provider._eval_count = source.eval_count
    return provider


def load_matrix(path, atol: float = 1e-9) -> PrecomputedProvider:
    """Load a precomputed matrix stored in the binary dataset format (q == n)."""
    ds = load_binary(path)
    if ds.n != ds.q:
        raise ValueError(f"{Path(path)}: matrix is {ds.n}x{ds.q}, not square")
    return PrecomputedProvider(ds.objects, atol=atol)
