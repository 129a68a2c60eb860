"""Labeled datasets of raw measurements, file formats and splits.

Row index ``i`` (0-based) of a :class:`Dataset` is the object identity used
everywhere else in the package: providers, prototype sets and pivot tables
all refer to objects by row index.
"""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, SplitError

BINARY_MAGIC = b"PROTOSEL"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable matrix of ``n`` objects by ``q`` measurements plus labels.

    Attributes:
        objects: float64 array of shape (n, q).
        labels: array of n opaque class tokens (compared by equality only).
        ids: optional array of n stable identifiers. Subsets produced by
            :func:`split` carry the parent row indices here.
        feature_names: optional column names, used when writing CSV.
    """

    objects: np.ndarray
    labels: np.ndarray
    ids: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        objects = np.array(self.objects, dtype=np.float64, order="C")
        if objects.ndim != 2:
            raise ValueError(f"objects must be 2-D, got shape {objects.shape}")
        n, q = objects.shape
        if n < 1 or q < 1:
            raise ValueError(f"dataset needs n >= 1 and q >= 1, got ({n}, {q})")
        labels = np.asarray(self.labels)
        if labels.shape != (n,):
            raise ValueError(f"expected {n} labels, got shape {labels.shape}")
        objects.setflags(write=False)
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "labels", labels)
        if self.ids is not None:
            ids = np.asarray(self.ids).copy()
            if ids.shape != (n,):
                raise ValueError(f"expected {n} ids, got shape {ids.shape}")
            ids.setflags(write=False)
            object.__setattr__(self, "ids", ids)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != q:
                raise ValueError(f"expected {q} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.objects.shape[0]

    @property
    def q(self) -> int:
        return self.objects.shape[1]

    @property
    def classes(self) -> np.ndarray:
        """Sorted unique label tokens."""
        return np.unique(self.labels)

    @cached_property
    def revision(self) -> str:
        """Content hash binding derived artifacts to this exact data."""
        h = hashlib.sha256()
        h.update(struct.pack("<QQ", self.n, self.q))
        h.update(self.objects.tobytes())
        for label in self.labels:
            h.update(str(label).encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()[:16]

    def subset(self, indices) -> Dataset:
        indices = np.asarray(indices, dtype=np.int64)
        parent_ids = self.ids if self.ids is not None else np.arange(self.n)
        return Dataset(
            self.objects[indices],
            self.labels[indices],
            ids=parent_ids[indices],
            feature_names=self.feature_names,
        )


@dataclass(frozen=True)
class SplitSpec:
    validation_fraction: float = 1.0
    train_fraction: float = 0.0
    test_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        fv, ft, fs = self.fractions
        if not 0.0 < fv <= 1.0:
            raise SplitError(f"validation_fraction must be in (0, 1], got {fv}")
        for name, f in (("train_fraction", ft), ("test_fraction", fs)):
            if not 0.0 <= f < 1.0:
                raise SplitError(f"{name} must be in [0, 1), got {f}")
        if abs(fv + ft + fs - 1.0) > 1e-9:
            raise SplitError(f"fractions must sum to 1, got {fv + ft + fs!r}")
        if self.seed < 0:
            raise SplitError("seed must be unsigned")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.validation_fraction, self.train_fraction, self.test_fraction)


# ---------------------------------------------------------------------------
# CSV


def load_csv(path, label_column: str = "label") -> Dataset:
    """Read a CSV whose header names a label column and the feature columns.

    Raises:
        DatasetFormatError: on a row with the wrong number of cells, a
            non-numeric feature cell, a missing label column or empty label.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetFormatError(
                f"{path}: label column {label_column!r} not in header {header}"
            )
        label_pos = header.index(label_column)
        feature_pos = [i for i in range(len(header)) if i != label_pos]
        if not feature_pos:
            raise DatasetFormatError(f"{path}: no feature columns")
        rows, labels = [], []
        # header is row 1, so data rows start at 2
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} cells, found {len(row)}", row=row_number
                )
            label = row[label_pos]
            if label == "":
                raise DatasetFormatError("missing label", row=row_number)
            try:
                rows.append([float(row[i]) for i in feature_pos])
            except ValueError as exc:
                raise DatasetFormatError(f"non-numeric feature: {exc}", row=row_number) from None
            labels.append(label)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return Dataset(
        np.array(rows, dtype=np.float64),
        np.array(labels),
        feature_names=tuple(header[i] for i in feature_pos),
    )


def save_csv(ds: Dataset, path, label_column: str = "label") -> None:
    names = ds.feature_names or tuple(f"f{j}" for j in range(ds.q))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, label_column])
        for row, label in zip(ds.objects, ds.labels):
            # repr round-trips float64 exactly
            writer.writerow([*(repr(float(v)) for v in row), str(label)])


# ---------------------------------------------------------------------------
# binary: magic, u64 n, u64 q, n*q f32, then n labels as u32 length + UTF-8


def save_binary(ds: Dataset, path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQ", ds.n, ds.q))
        fh.write(ds.objects.astype("<f4").tobytes())
        for label in ds.labels:
            raw = str(label).encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_binary(path) -> Dataset:
    data = Path(path).read_bytes()
    if data[:8] != BINARY_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {data[:8]!r}")
    if len(data) < 24:
        raise DatasetFormatError(f"{path}: truncated header")
    n, q = struct.unpack_from("<QQ", data, 8)
    offset = 24
    nbytes = 4 * n * q
    if len(data) < offset + nbytes:
        raise DatasetFormatError(f"{path}: truncated matrix ({n}x{q})")
    objects = np.frombuffer(data, dtype="<f4", count=n * q, offset=offset).reshape(n, q)
    offset += nbytes
    labels = []
    for i in range(n):
        if len(data) < offset + 4:
            raise DatasetFormatError(f"{path}: truncated label section", row=i)
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        raw = data[offset : offset + length]
        if len(raw) != length:
            raise DatasetFormatError(f"{path}: truncated label", row=i)
        labels.append(raw.decode("utf-8"))
        offset += length
    return Dataset(objects.astype(np.float64), np.array(labels))


def load_any(path, label_column: str = "label") -> Dataset:
    """Dispatch on the file magic: binary if it starts with PROTOSEL, else CSV."""
    with Path(path).open("rb") as fh:
        head = fh.read(8)
    if head == BINARY_MAGIC:
        return load_binary(path)
    return load_csv(path, label_column)


# ---------------------------------------------------------------------------
# splits


def _allocate(m: int, fractions) -> list[int]:
    """Largest-remainder allocation of ``m`` members to the given fractions.

    Every split with a nonzero fraction receives at least one member; the
    member is taken from the split holding the largest surplus over its
    exact share, which keeps every count within one of ``f * m``.
    """
    exact = [f * m for f in fractions]
    counts = [int(np.floor(e + 1e-9)) for e in exact]
    order = sorted(range(len(exact)), key=lambda s: (-(exact[s] - counts[s]), s))
    for s in order[: m - sum(counts)]:
        counts[s] += 1
    for s, f in enumerate(fractions):
        if f > 0 and counts[s] == 0:
            donors = [d for d in range(len(counts)) if counts[d] >= 2 or (counts[d] == 1 and fractions[d] == 0)]
            if not donors:
                raise SplitError("class too small for requested splits")
            donor = max(donors, key=lambda d: (counts[d] - exact[d], -d))
            counts[donor] -= 1
            counts[s] += 1
    return counts


def split_indices(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified split of row indices into (validation, train, test).

    Each part is returned sorted. The assignment depends only on the labels
    and ``spec.seed``.
    """
    labels = np.asarray(labels)
    nonzero = sum(1 for f in spec.fractions if f > 0)
    rng = np.random.default_rng(spec.seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < nonzero:
            raise SplitError(
                f"class {cls!r} has {len(members)} members but {nonzero} nonzero splits were requested"
            )
        members = rng.permutation(members)
        counts = _allocate(len(members), spec.fractions)
        start = 0
        for s, c in enumerate(counts):
            parts[s].append(members[start : start + c])
            start += c
    return tuple(
        np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts
    )


def split(ds: Dataset, spec: SplitSpec):
    """Stratified split into validation, train and test datasets.

    Empty parts are returned as ``None`` since a Dataset needs ``n >= 1``.
    Subsets carry their parent row indices in ``ids``.
    """
    return tuple(ds.subset(idx) if len(idx) else None for idx in split_indices(ds.labels, spec))


# ---------------------------------------------------------------------------
# synthetic data


def generate_blobs(classes: int, per_class: int, q: int, spread: float, seed: int) -> Dataset:
    """Gaussian class clusters around standard-normal centers.

    ``spread`` is the per-coordinate standard deviation of each cluster, so
    overlap grows with it. Labels are the strings ``"0" .. str(classes-1)``.
    """
    if classes < 1 or per_class < 1 or q < 1:
        raise ValueError("classes, per_class and q must all be >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, q))
    noise = rng.standard_normal((classes, per_class, q)) * spread
    objects = (centers[:, None, :] + noise).reshape(classes * per_class, q)
    labels = np.repeat(np.arange(classes), per_class).astype(str)
    return Dataset(objects, labels)
