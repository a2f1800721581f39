"""Combinatorial substrate of the unlearning sample inference game.

Datasets, sensitivity weights, the split space for a given unlearning
portion, swap pairing and the random oracle that emits points from the
forget set (bit 0) or the test set (bit 1).
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateOracle,
    DimensionMismatch,
    EnumerationTooLarge,
    InvalidParameter,
    NonIntegralSplit,
)

MASS_TOL = 1e-12


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of printable parts."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class DataPoint:
    id: int
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled feature matrix; point ``i`` has id ``i``.

    ``source_ids`` keeps the ids the points had before canonicalization
    (file ids, or ids in a parent dataset after partitioning).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    source_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidParameter("dataset must be a nonempty 2-d feature matrix", "features")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch("one label per point required", "labels")
        if self.num_classes < 1 or y.min() < 0 or y.max() >= self.num_classes:
            raise InvalidParameter("labels must lie in [0, num_classes)", "labels")
        src = np.arange(X.shape[0]) if self.source_ids is None else np.asarray(self.source_ids, dtype=np.int64)
        if src.shape != y.shape or len(np.unique(src)) != len(src):
            raise InvalidParameter("source ids must be unique, one per point", "source_ids")
        X.setflags(write=False)
        y.setflags(write=False)
        src.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "source_ids", src)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def ids(self) -> range:
        return range(len(self))

    def point(self, i: int) -> DataPoint:
        return DataPoint(int(i), self.features[i], int(self.labels[i]))

    @property
    def points(self) -> list[DataPoint]:
        return [self.point(i) for i in self.ids]

    def subset(self, ids: Sequence[int]) -> list[DataPoint]:
        return [self.point(i) for i in ids]

    def take(self, ids: Sequence[int]) -> "Dataset":
        """New dataset of the selected points, ids re-canonicalized, provenance kept."""
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(self.features[ids], self.labels[ids], self.num_classes, self.source_ids[ids])


def load_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    """Read ``id,label,f0,...`` rows. Ids are canonicalized to file order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "label"] or any(h != f"f{i}" for i, h in enumerate(header[2:])):
            raise InvalidParameter(f"bad CSV header {header!r}", "header")
        rows = [r for r in reader if r]
    if not rows:
        raise InvalidParameter("CSV has no data rows", str(path))
    src = np.array([int(r[0]) for r in rows])
    y = np.array([int(r[1]) for r in rows])
    X = np.array([[float(v) for v in r[2:]] for r in rows])
    C = int(y.max()) + 1 if num_classes is None else num_classes
    return Dataset(X, y, C, src)


def save_csv(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{j}" for j in range(dataset.dim)])
        for i in dataset.ids:
            w.writerow([i, int(dataset.labels[i])] + [repr(float(v)) for v in dataset.features[i]])


@dataclass(frozen=True, eq=False)
class SensitivityDistribution:
    """Sampling weights over dataset ids (index = id)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidParameter("weights must be a nonempty non-negative vector", "weights")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise InvalidParameter(f"weights sum to {w.sum()!r}, expected 1", "weights")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "SensitivityDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_mapping(cls, weights: Mapping[int, float], n: int) -> "SensitivityDistribution":
        w = np.zeros(n)
        for i, v in weights.items():
            if not 0 <= int(i) < n:
                raise InvalidParameter(f"weight for unknown id {i}", "weights")
            w[int(i)] = float(v)
        total = w.sum()
        if total <= 0:
            raise InvalidParameter("weights have zero total mass", "weights")
        return cls(w / total)

    def __len__(self) -> int:
        return len(self.weights)


def load_sensitivity(source: str | Path, n: int) -> SensitivityDistribution:
    """``"uniform"`` or a path to an ``id,weight`` CSV (renormalized)."""
    if str(source) == "uniform":
        return SensitivityDistribution.uniform(n)
    with open(source, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["id", "weight"]:
            raise InvalidParameter(f"bad sensitivity header {reader.fieldnames!r}", "sensitivity")
        weights = {int(r["id"]): float(r["weight"]) for r in reader}
    return SensitivityDistribution.from_mapping(weights, n)


def split_sizes(n: int, alpha: Fraction | str | int) -> tuple[int, int]:
    """Retain and forget/test sizes ``(r, t)`` with ``r + 2t = n`` and ``t/(r+t) = alpha``."""
    alpha = Fraction(alpha)
    if n < 3:
        raise InvalidParameter("need at least 3 points", "n")
    if not 0 < alpha < 1:
        raise InvalidParameter("alpha must lie in (0, 1)", "alpha")
    # t = alpha (r + t) and r = n - 2t  =>  t (1 + alpha) = alpha n
    t = alpha * n / (1 + alpha)
    if t.denominator != 1 or t < 1:
        raise NonIntegralSplit(f"no integral split of n={n} at alpha={alpha}", "alpha")
    t = int(t)
    return n - 2 * t, t


@dataclass(frozen=True)
class Split:
    """Ordered (retain, forget, test) triple of sorted id tuples."""

    retain: tuple[int, ...]
    forget: tuple[int, ...]
    test: tuple[int, ...]
    alpha: Fraction = field(compare=False)

    def __post_init__(self):
        for name in ("retain", "forget", "test"):
            object.__setattr__(self, name, tuple(sorted(int(i) for i in getattr(self, name))))
        R, F, T = map(set, (self.retain, self.forget, self.test))
        if len(F) != len(T) or not F:
            raise InvalidParameter("forget and test sets must be nonempty and equal-sized", "split")
        if len(R) + len(F) + len(T) != len(R | F | T) or len(R) != len(self.retain):
            raise InvalidParameter("retain, forget and test must be disjoint", "split")
        if Fraction(len(F), len(R) + len(F)) != Fraction(self.alpha):
            raise InvalidParameter("alpha does not match |F| / |R u F|", "alpha")
        object.__setattr__(self, "alpha", Fraction(self.alpha))

    @classmethod
    def from_sets(cls, retain, forget, test) -> "Split":
        return cls(tuple(retain), tuple(forget), tuple(test), Fraction(len(forget), len(retain) + len(forget)))

    @property
    def n(self) -> int:
        return len(self.retain) + 2 * len(self.forget)

    def key(self) -> str:
        """Canonical text form, used for seed derivation and report rows."""
        return "R{}|F{}|T{}".format(*(",".join(map(str, s)) for s in (self.retain, self.forget, self.test)))

    def retain_key(self) -> str:
        return "R" + ",".join(map(str, self.retain))

    def selected(self, bit: int) -> tuple[int, ...]:
        return self.forget if bit == 0 else self.test

    def covers(self, n: int) -> bool:
        return sorted(self.retain + self.forget + self.test) == list(range(n))


def num_splits(n: int, alpha) -> int:
    r, t = split_sizes(n, alpha)
    return math.factorial(n) // (math.factorial(r) * math.factorial(t) ** 2)


def enumerate_splits(dataset: Dataset | int, alpha, cap: int | None = None) -> Iterator[Split]:
    """Every split of the dataset at ``alpha``, lexicographic by (forget, test)."""
    n = dataset if isinstance(dataset, int) else len(dataset)
    alpha = Fraction(alpha)
    r, t = split_sizes(n, alpha)
    if cap is not None and num_splits(n, alpha) > cap:
        raise EnumerationTooLarge(f"{num_splits(n, alpha)} splits exceed cap {cap}", "alpha")
    ids = range(n)
    for F in itertools.combinations(ids, t):
        rest = [i for i in ids if i not in F]
        for T in itertools.combinations(rest, t):
            Tset = set(T)
            yield Split(tuple(i for i in rest if i not in Tset), F, T, alpha)


def sample_split(dataset: Dataset | int, alpha, seed: int) -> Split:
    """Uniform draw from the split space: seeded shuffle then slice r / t / t."""
    n = dataset if isinstance(dataset, int) else len(dataset)
    alpha = Fraction(alpha)
    r, t = split_sizes(n, alpha)
    perm = np.random.default_rng(seed).permutation(n)
    return Split(tuple(perm[:r]), tuple(perm[r:r + t]), tuple(perm[r + t:]), alpha)


def swap(split: Split) -> Split:
    return Split(split.retain, split.test, split.forget, split.alpha)


@dataclass(frozen=True)
class OracleSpec:
    split: Split
    bit: int
    sensitivity: SensitivityDistribution

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise InvalidParameter("bit must be 0 or 1", "bit")


def conditional_mass(sensitivity: SensitivityDistribution, ids: Sequence[int]) -> np.ndarray:
    """Weights restricted to ``ids`` and renormalized; aligned with ``ids``."""
    w = sensitivity.weights[np.asarray(ids, dtype=np.int64)]
    total = w.sum()
    if not total > 0:
        raise DegenerateOracle("selected set carries zero sensitivity mass", "sensitivity")
    return w / total


def oracle_mass(spec: OracleSpec) -> dict[int, float]:
    ids = spec.split.selected(spec.bit)
    return dict(zip(ids, conditional_mass(spec.sensitivity, ids).tolist()))


class Oracle:
    """Stateful handle for one play: i.i.d. draws from the conditional mass.

    Counts queries so adversaries can be held to a budget.
    """

    def __init__(self, spec: OracleSpec, dataset: Dataset, seed: int):
        self._ids = np.asarray(spec.split.selected(spec.bit))
        self._p = conditional_mass(spec.sensitivity, self._ids)
        self._dataset = dataset
        self._rng = np.random.default_rng(seed)
        self.queries = 0

    def draw(self) -> DataPoint:
        self.queries += 1
        return self._dataset.point(int(self._rng.choice(self._ids, p=self._p)))

    __call__ = draw


def oracle_draw(spec: OracleSpec, dataset: Dataset, seed: int) -> DataPoint:
    return Oracle(spec, dataset, seed).draw()
