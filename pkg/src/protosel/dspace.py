"""Dissimilarity-space embedding and the classifiers used on it."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dissim import DissimilarityProvider
from .errors import SingularCovarianceError


@dataclass
class PrototypeSet:
    """A selected representation set and where it came from.

    ``indices`` are object indices in selection order (gene order for the
    GA). ``fitness_trace`` holds whatever per-step score the selector
    tracks: best fitness per generation for the GA, the greedy step value
    for forward selection, the covering radius per iteration for Kcentres.
    """

    indices: np.ndarray
    method: str = "manual"
    seed: int | None = None
    fitness_trace: list[float] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if self.indices.size < 1:
            raise ValueError("a prototype set needs k >= 1")
        if np.unique(self.indices).size != self.indices.size:
            raise ValueError(f"prototype indices are not distinct: {self.indices.tolist()}")
        if self.indices.min() < 0:
            raise ValueError("prototype indices must be non-negative")

    @property
    def k(self) -> int:
        return int(self.indices.size)

    def to_manifest(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "k": self.k,
            "params": self.params,
            "fitness_trace": None if self.fitness_trace is None else [float(v) for v in self.fitness_trace],
            "indices": self.indices.tolist(),
        }

    @classmethod
    def from_manifest(cls, doc: dict) -> PrototypeSet:
        return cls(
            doc["indices"],
            method=doc.get("method", "manual"),
            seed=doc.get("seed"),
            fitness_trace=doc.get("fitness_trace"),
            params=doc.get("params") or {},
        )


def save_manifest(protos: PrototypeSet, path, **extra) -> None:
    doc = protos.to_manifest()
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> PrototypeSet:
    return PrototypeSet.from_manifest(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Embedding:
    vectors: np.ndarray
    prototypes: PrototypeSet
    objects: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.vectors.shape[1]


def embed(provider: DissimilarityProvider, objects, protos: PrototypeSet) -> Embedding:
    """Map each object to its vector of dissimilarities to the prototypes.

    Row ``a`` corresponds to ``objects[a]`` and column ``j`` to
    ``protos.indices[j]``.
    """
    objects = np.asarray(objects, dtype=np.int64).reshape(-1)
    vectors = provider.block(objects, protos.indices)
    return Embedding(vectors, protos, objects)


def _as_vectors(x) -> np.ndarray:
    return np.asarray(x.vectors if isinstance(x, Embedding) else x, dtype=np.float64)


def classify_1nn(train, train_labels, test, batch_size: int = 4096) -> np.ndarray:
    """Label of the Euclidean-nearest training row, ties to the lowest row."""
    tr = _as_vectors(train)
    te = _as_vectors(test)
    train_labels = np.asarray(train_labels)
    if tr.shape[0] == 0:
        raise ValueError("empty training set")
    if tr.shape[0] != train_labels.shape[0]:
        raise ValueError("train rows and labels differ in length")
    if tr.shape[1] != te.shape[1]:
        raise ValueError(f"dimension mismatch: train k={tr.shape[1]}, test k={te.shape[1]}")
    nearest = np.empty(te.shape[0], dtype=np.int64)
    for start in range(0, te.shape[0], batch_size):
        d2 = cdist(te[start : start + batch_size], tr, "sqeuclidean")
        nearest[start : start + batch_size] = np.argmin(d2, axis=1)
    return train_labels[nearest]


class LinearDiscriminant:
    """Gaussian Bayes classifier with a shared ridge-regularized covariance.

    With ``reg=None`` the ridge is ``1e-6 * trace(S) / k`` where ``S`` is the
    pooled within-class covariance. Class priors are the training
    frequencies; score ties go to the first class in sorted token order.
    """

    def __init__(self, reg: float | None = None):
        if reg is not None and reg < 0:
            raise ValueError("reg must be >= 0")
        self.reg = reg

    def fit(self, x, labels):
        x = _as_vectors(x)
        labels = np.asarray(labels)
        self.classes_ = np.unique(labels)
        if self.classes_.size < 2:
            raise ValueError("LDC needs at least 2 classes")
        n, k = x.shape
        means = np.empty((self.classes_.size, k))
        scatter = np.zeros((k, k))
        counts = np.empty(self.classes_.size)
        for c, cls in enumerate(self.classes_):
            xc = x[labels == cls]
            counts[c] = xc.shape[0]
            means[c] = xc.mean(axis=0)
            centered = xc - means[c]
            scatter += centered.T @ centered
        dof = n - self.classes_.size
        cov = scatter / (dof if dof > 0 else n)
        reg = self.reg
        if reg is None:
            reg = 1e-6 * np.trace(cov) / k
        self.reg_ = float(reg)
        cov = cov + self.reg_ * np.eye(k)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            chol = None
        if chol is None or np.min(np.abs(np.diag(chol))) ** 2 < 1e-12 * max(np.trace(cov) / k, 1e-300):
            raise SingularCovarianceError(
                f"pooled covariance is singular with reg={self.reg_:g}; use reg > 0"
            )
        weights = np.linalg.solve(cov, means.T)
        self.means_ = means
        self.weights_ = weights
        self.bias_ = -0.5 * np.einsum("ck,kc->c", means, weights) + np.log(counts / n)
        return self

    def decision_function(self, x) -> np.ndarray:
        return _as_vectors(x) @ self.weights_ + self.bias_

    def predict(self, x) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(x), axis=1)]


def classify_ldc(train, train_labels, test, reg: float | None = None) -> np.ndarray:
    tr = _as_vectors(train)
    te = _as_vectors(test)
    if tr.shape[1] != te.shape[1]:
        raise ValueError(f"dimension mismatch: train k={tr.shape[1]}, test k={te.shape[1]}")
    return LinearDiscriminant(reg).fit(tr, train_labels).predict(te)


def error_rate(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("cannot compute an error rate over zero objects")
    return float(np.mean(predicted != truth))


def export_embedding_csv(emb: Embedding, labels, path) -> None:
    """One row per object: the k coordinates, then its label."""
    labels = np.asarray(labels)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*(f"d{int(r)}" for r in emb.prototypes.indices), "label"])
        for row, label in zip(emb.vectors, labels):
            writer.writerow([*(repr(float(v)) for v in row), str(label)])
