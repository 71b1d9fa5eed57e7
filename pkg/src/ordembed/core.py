"""Shared domain types: embeddings, ordinal comparisons and comparison sets.

An embedding is a p x n matrix whose column i holds the coordinates of
object i.  A comparison is an ordered quadruplet (i, j, l, k) asserting
that objects i and j are more similar than objects l and k; triplets are
the l == i special case.  All indices are 0-based internally (file formats
are 1-based, see :mod:`ordembed.data`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CENTER_TOL = 1e-9


class Comparison(NamedTuple):
    """Ordered quadruplet (i, j, l, k) with a binary label.

    label +1 means "d(i, j) < d(l, k)"; label -1 means the opposite.
    """

    i: int
    j: int
    l: int
    k: int
    label: int = 1

    def canonical(self) -> "Comparison":
        """Label +1 form: a -1 label swaps the roles of (i, j) and (l, k)."""
        if self.label == 1:
            return self
        if self.label == -1:
            return Comparison(self.l, self.k, self.i, self.j, 1)
        raise ValueError(f"label must be +1 or -1, got {self.label}")

    @property
    def is_triplet(self) -> bool:
        return self.l == self.i


@dataclass(frozen=True)
class Embedding:
    """p x n coordinate matrix, column i = object i. Immutable."""

    data: np.ndarray
    centered: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"embedding must be a 2-d matrix, got shape {arr.shape}")
        p, n = arr.shape
        if p < 1 or n < 2:
            raise ValueError(f"need p >= 1 and n >= 2, got p={p}, n={n}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite entries")
        if self.centered:
            row_sums = arr.sum(axis=1)
            if np.max(np.abs(row_sums)) > CENTER_TOL * n:
                raise ValueError("embedding flagged centered but rows do not sum to 0")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


def as_matrix(X: "Embedding | np.ndarray") -> np.ndarray:
    """Coordinate matrix of an Embedding, or a float view of a raw array."""
    if isinstance(X, Embedding):
        return X.data
    return np.asarray(X, dtype=float)


def squared_distance(X: "Embedding | np.ndarray", a: int, b: int) -> float:
    """Squared Euclidean distance between columns a and b of X."""
    data = as_matrix(X)
    n = data.shape[1]
    if not (0 <= a < n and 0 <= b < n):
        raise IndexError(f"indices ({a}, {b}) out of range for n={n}")
    diff = data[:, a] - data[:, b]
    return float(diff @ diff)


def comparison_margin(X: "Embedding | np.ndarray", q: Comparison) -> float:
    """d^2(i, j) - d^2(l, k) for the label +1 form of q.

    Negative margin means the comparison is satisfied by X.
    """
    q = q.canonical()
    return squared_distance(X, q.i, q.j) - squared_distance(X, q.l, q.k)


def center(X: "Embedding | np.ndarray") -> Embedding:
    """Translate X so every coordinate row sums to zero.

    Pairwise distances are unchanged; the operation is idempotent.
    """
    data = as_matrix(X)
    return Embedding(data - data.mean(axis=1, keepdims=True), centered=True)


class ComparisonSet:
    """Deduplicated, canonicalized collection of comparisons over n objects.

    Comparisons are stored in label +1 form as parallel index arrays so the
    loss and optimizer code can vectorize over them.  Duplicates (and
    contradictions, i.e. the same quadruplet with both labels) are dropped
    at construction, keeping the first occurrence.
    """

    def __init__(self, comparisons: Iterable[Comparison], n: int):
        if n < 2:
            raise ValueError(f"need n >= 2, got {n}")
        seen: set[tuple[int, int, int, int]] = set()
        kept: list[Comparison] = []
        dropped = 0
        for q in comparisons:
            q = self._validate(q, n).canonical()
            key = (q.i, q.j, q.l, q.k)
            mirror = (q.l, q.k, q.i, q.j)
            if key in seen or mirror in seen:
                dropped += 1
                continue
            seen.add(key)
            kept.append(q)
        if dropped:
            logger.info("dropped %d duplicate/contradictory comparisons", dropped)
        self.n = n
        self.dropped = dropped
        self.i = np.array([q.i for q in kept], dtype=np.intp)
        self.j = np.array([q.j for q in kept], dtype=np.intp)
        self.l = np.array([q.l for q in kept], dtype=np.intp)
        self.k = np.array([q.k for q in kept], dtype=np.intp)
        for arr in (self.i, self.j, self.l, self.k):
            arr.flags.writeable = False
        self.triplet_mode = bool(len(kept)) and bool(np.all(self.i == self.l))

    @staticmethod
    def _validate(q: Comparison, n: int) -> Comparison:
        for idx in (q.i, q.j, q.l, q.k):
            if not (0 <= idx < n):
                raise IndexError(f"comparison index {idx} out of range for n={n}")
        if q.i == q.j or q.l == q.k:
            raise ValueError(f"degenerate comparison {q}: need i != j and l != k")
        if (q.i, q.j) == (q.l, q.k):
            raise ValueError(f"degenerate comparison {q}: (i, j) == (l, k)")
        if q.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {q.label}")
        return q

    def __len__(self) -> int:
        return len(self.i)

    def __iter__(self) -> Iterator[Comparison]:
        for a, b, c, d in zip(self.i, self.j, self.l, self.k):
            yield Comparison(int(a), int(b), int(c), int(d), 1)

    def __getitem__(self, idx: int) -> Comparison:
        return Comparison(
            int(self.i[idx]), int(self.j[idx]), int(self.l[idx]), int(self.k[idx]), 1
        )

    def subset(self, indices: Sequence[int]) -> "ComparisonSet":
        return ComparisonSet([self[int(t)] for t in indices], self.n)
