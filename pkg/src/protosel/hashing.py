"""Pivot tables for fast approximate nearest-prototype search.

Objects are encoded by their raw dissimilarities to ``p`` pivots, giving an
intermediate dissimilarity space of low dimension. Nearest prototypes are
then searched with Euclidean distance in that space instead of calling the
measure on raw data. Radii are trained so that each pivot's sphere holds
about half the training sample, but codes are never binarized.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dissim import DissimilarityProvider
from .errors import DegenerateSampleError, StaleAcceleratorError

log = logging.getLogger(__name__)

DEFAULT_PIVOTS = 64
SAMPLE_CAP = 10_000
OVERLAP_SLACK = 1.5


@dataclass
class PivotTable:
    pivot_indices: np.ndarray
    radii: np.ndarray
    dataset_revision: str
    codes: np.ndarray | None = None
    encoded: np.ndarray | None = None
    sample_size: int = 0
    swap_rounds: int = 0

    @property
    def p(self) -> int:
        return int(self.pivot_indices.size)

    def codes_for(self, indices) -> np.ndarray:
        """Code rows of the given objects; they must have been encoded."""
        if self.codes is None:
            raise StaleAcceleratorError("pivot table has no codes; call with_codes first")
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        pos = self._positions()
        if indices.size and (indices.max() >= pos.size or indices.min() < 0):
            raise StaleAcceleratorError("object outside the encoded index range")
        rows = pos[indices]
        if np.any(rows < 0):
            missing = indices[rows < 0][0]
            raise StaleAcceleratorError(f"object {missing} was not encoded by this pivot table")
        return self.codes[rows]

    def _positions(self) -> np.ndarray:
        cached = getattr(self, "_pos", None)
        if cached is None:
            cached = np.full(int(self.encoded.max()) + 1, -1, dtype=np.int64)
            cached[self.encoded] = np.arange(self.encoded.size)
            self._pos = cached
        return cached

    def to_dict(self) -> dict:
        return {
            "pivot_indices": self.pivot_indices.tolist(),
            "radii": [float(r) for r in self.radii],
            "dataset_revision": self.dataset_revision,
            "sample_size": self.sample_size,
            "swap_rounds": self.swap_rounds,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PivotTable:
        return cls(
            np.asarray(doc["pivot_indices"], dtype=np.int64),
            np.asarray(doc["radii"], dtype=np.float64),
            doc["dataset_revision"],
            sample_size=doc.get("sample_size", 0),
            swap_rounds=doc.get("swap_rounds", 0),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> PivotTable:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def sphere_membership(dists: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Boolean matrix: object strictly closer to pivot ``j`` than its radius."""
    return dists < radii[None, :]


def train_pivots(
    provider: DissimilarityProvider,
    sample,
    p: int = DEFAULT_PIVOTS,
    seed=0,
    max_rounds: int = 16,
    sample_cap: int = SAMPLE_CAP,
) -> PivotTable:
    """Choose ``p`` distinct pivots from ``sample`` and fit their radii.

    Radii are per-pivot medians of the dissimilarities to the sample. Each
    swap round finds the pivot pair whose spheres share the most sample
    objects; if that overlap exceeds 1.5x the ideal quarter of the sample,
    both pivots are replaced by fresh random sample objects.

    Raises:
        DegenerateSampleError: when some radius is zero, e.g. an
            all-identical sample.
    """
    rng = np.random.default_rng(seed)
    sample = np.unique(np.asarray(sample, dtype=np.int64))
    if sample.size > sample_cap:
        sample = np.sort(rng.choice(sample, sample_cap, replace=False))
    m = sample.size
    if p < 1 or m < p:
        raise ValueError(f"need 1 <= p <= |sample|, got p={p}, |sample|={m}")

    pivots = rng.choice(sample, p, replace=False)
    dists = provider.block(sample, pivots)
    radii = np.median(dists, axis=0)
    ideal = m / 4.0
    rounds = 0
    for _ in range(max_rounds if p >= 2 else 0):
        inside = sphere_membership(dists, radii).astype(np.int64)
        overlap = inside.T @ inside
        np.fill_diagonal(overlap, -1)
        a, b = np.unravel_index(np.argmax(overlap), overlap.shape)
        if overlap[a, b] <= OVERLAP_SLACK * ideal:
            break
        unused = np.setdiff1d(sample, pivots, assume_unique=True)
        if unused.size < 2:
            break
        fresh = rng.choice(unused, 2, replace=False)
        pivots[[a, b]] = fresh
        dists[:, [a, b]] = provider.block(sample, fresh)
        radii[[a, b]] = np.median(dists[:, [a, b]], axis=0)
        rounds += 1
    if np.any(radii <= 0):
        raise DegenerateSampleError(
            f"{int(np.sum(radii <= 0))} pivot radii are zero; the sample is degenerate"
        )
    log.debug("trained %d pivots on %d objects with %d swap rounds", p, m, rounds)
    return PivotTable(pivots, radii, provider.revision, sample_size=m, swap_rounds=rounds)


def encode(provider: DissimilarityProvider, table: PivotTable, objects) -> np.ndarray:
    """``|objects| x p`` matrix of dissimilarities to the pivots."""
    if table.dataset_revision != provider.revision:
        raise StaleAcceleratorError(
            f"pivot table built for revision {table.dataset_revision}, "
            f"provider is {provider.revision}"
        )
    return provider.block(objects, table.pivot_indices)


def with_codes(provider: DissimilarityProvider, table: PivotTable, objects=None) -> PivotTable:
    """Return a copy of ``table`` carrying codes for ``objects`` (default: all)."""
    objects = np.arange(provider.n) if objects is None else np.unique(np.asarray(objects, dtype=np.int64))
    return replace(table, codes=encode(provider, table, objects), encoded=objects)


def build_pivot_table(provider, sample, p=DEFAULT_PIVOTS, seed=0, max_rounds=16, objects=None) -> PivotTable:
    return with_codes(provider, train_pivots(provider, sample, p, seed, max_rounds), objects)


def approx_nearest_prototype(codes_v: np.ndarray, codes_r: np.ndarray, batch_size: int = 8192) -> np.ndarray:
    """Per V-row index of the closest R-row in pivot space, ties to the lowest."""
    codes_v = np.asarray(codes_v, dtype=np.float64)
    codes_r = np.asarray(codes_r, dtype=np.float64)
    if codes_v.ndim != 2 or codes_r.ndim != 2 or codes_v.shape[1] != codes_r.shape[1]:
        raise ValueError(f"pivot dimension mismatch: {codes_v.shape} vs {codes_r.shape}")
    if codes_r.shape[0] == 0:
        raise ValueError("no prototypes")
    out = np.empty(codes_v.shape[0], dtype=np.int64)
    for start in range(0, codes_v.shape[0], batch_size):
        d2 = cdist(codes_v[start : start + batch_size], codes_r, "sqeuclidean")
        out[start : start + batch_size] = np.argmin(d2, axis=1)
    return out
