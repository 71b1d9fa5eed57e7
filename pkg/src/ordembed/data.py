"""Dataset construction: synthetic clouds, triplet generation, noise, files.

Triplets are stored as quadruplets with l = i so the loss code needs no
special case.  File formats use 1-based indices; see the README for the
CSV layouts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import Comparison, ComparisonSet, Embedding

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """i.i.d. Gaussian point cloud: n columns from N(mean, variance * I)."""

    n: int
    p: int
    variance: float = 1.0 / 20.0
    mean: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be > 0, got {self.variance}")
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")


@dataclass(frozen=True)
class SplitSpec:
    train_count: int | None = None
    test_count: int | None = None
    train_fraction: float | None = None
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.noise_rate < 1.0):
            raise ValueError(f"noise_rate must be in [0, 1), got {self.noise_rate}")
        if self.train_count is None and self.train_fraction is None:
            raise ValueError("need train_count or train_fraction")


def gen_synthetic(spec: SyntheticSpec) -> Embedding:
    """Sample the Gaussian cloud; a zero-mean spec is re-centered exactly."""
    rng = np.random.default_rng(spec.seed)
    mean = np.zeros(spec.p) if spec.mean is None else np.asarray(spec.mean, dtype=float)
    if mean.shape != (spec.p,):
        raise ValueError(f"mean must have shape ({spec.p},)")
    data = mean[:, None] + math.sqrt(spec.variance) * rng.standard_normal(
        (spec.p, spec.n)
    )
    if np.all(mean == 0.0):
        data = data - data.mean(axis=1, keepdims=True)
        return Embedding(data, centered=True)
    return Embedding(data)


def _decode_pair(r: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Index r in [0, C(m, 2)) -> unordered pair (a, b), a < b, of [0, m)."""
    # row a covers m-1-a consecutive indices; invert via triangular cumsum
    counts = np.arange(m - 1, 0, -1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    a = np.searchsorted(starts, r, side="right") - 1
    b = a + 1 + (r - starts[a])
    return a, b


def triplet_space_size(n: int) -> int:
    """Number of distinct triplets: n anchors times C(n-1, 2) unordered pairs."""
    return n * (n - 1) * (n - 2) // 2


def _triplets_from_sqdist(
    D2: np.ndarray, count: int | None, seed: int
) -> ComparisonSet:
    n = D2.shape[0]
    total = triplet_space_size(n)
    if count is None:
        count = total
    if not (1 <= count <= total):
        raise ValueError(f"count must be in [1, {total}], got {count}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    pairs_per_anchor = (n - 1) * (n - 2) // 2
    comparisons: list[Comparison] = []
    for flat in order:
        anchor = int(flat // pairs_per_anchor)
        a, b = _decode_pair(np.array([flat % pairs_per_anchor]), n - 1)
        others = np.concatenate([np.arange(anchor), np.arange(anchor + 1, n)])
        u, v = int(others[a[0]]), int(others[b[0]])
        du, dv = D2[anchor, u], D2[anchor, v]
        if du == dv:  # tied distances carry no ordinal information; skip
            continue
        j, k = (u, v) if du < dv else (v, u)
        comparisons.append(Comparison(anchor, j, anchor, k, 1))
        if len(comparisons) == count:
            break
    if len(comparisons) < count:
        raise ValueError("not enough tie-free triplets available")
    return ComparisonSet(comparisons, n)


def sample_triplets(X_true: Embedding, count: int | None, seed: int) -> ComparisonSet:
    """Uniform without-replacement sample of distance-labeled triplets."""
    data = X_true.data
    sq = np.sum(data * data, axis=0)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (data.T @ data)
    np.fill_diagonal(D2, 0.0)
    return _triplets_from_sqdist(D2, count, seed)


def triplets_from_distance_matrix(
    D: np.ndarray, count: int | None = None, seed: int = 0
) -> ComparisonSet:
    """Triplets labeled directly from a distance matrix (not squared)."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distance matrix must be square, got {D.shape}")
    if np.max(np.abs(D - D.T)) > 1e-9 * max(1.0, np.max(np.abs(D))):
        raise ValueError("distance matrix must be symmetric")
    if np.max(np.abs(np.diag(D))) > 0 or np.min(D) < 0:
        raise ValueError("distance matrix must be non-negative with zero diagonal")
    return _triplets_from_sqdist(D * D, count, seed)


def inject_noise(Q: ComparisonSet, rate: float, seed: int) -> ComparisonSet:
    """Swap the roles of (i, j) and (l, k) in exactly floor(rate * |Q|) entries.

    Applying the same (rate, seed) twice restores the original labels.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    flips = int(rate * len(Q))
    rng = np.random.default_rng(seed)
    flip_idx = set(rng.choice(len(Q), size=flips, replace=False).tolist()) if flips else set()
    out = []
    for t, q in enumerate(Q):
        if t in flip_idx:
            out.append(Comparison(q.l, q.k, q.i, q.j, 1))
        else:
            out.append(q)
    return ComparisonSet(out, Q.n)


def split_comparisons(
    Q: ComparisonSet, spec: SplitSpec
) -> tuple[ComparisonSet, ComparisonSet]:
    """Disjoint train/test split whose union is Q (before any noise)."""
    total = len(Q)
    if spec.train_fraction is not None:
        train_count = int(round(spec.train_fraction * total))
        test_count = total - train_count
    else:
        train_count = spec.train_count
        test_count = spec.test_count if spec.test_count is not None else total - train_count
    if train_count + test_count > total or train_count < 1 or test_count < 1:
        raise ValueError(
            f"cannot split {total} comparisons into {train_count} + {test_count}"
        )
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(total)
    train = Q.subset(order[:train_count])
    test = Q.subset(order[train_count : train_count + test_count])
    return train, test


def class_triplets(labels: np.ndarray, count: int, seed: int) -> ComparisonSet:
    """Triplets (i, j, k) with class(i) == class(j) != class(k), label +1."""
    labels = np.asarray(labels)
    n = labels.size
    classes, sizes = np.unique(labels, return_counts=True)
    if classes.size < 2 or np.min(sizes) < 2:
        raise ValueError("need >= 2 classes with >= 2 members each")
    rng = np.random.default_rng(seed)
    seen: set[tuple[int, int, int]] = set()
    out: list[Comparison] = []
    by_class = {c: np.flatnonzero(labels == c) for c in classes}
    attempts = 0
    max_attempts = 200 * count + 1000
    while len(out) < count:
        attempts += 1
        if attempts > max_attempts:
            raise ValueError(f"could not draw {count} distinct class triplets")
        c = classes[rng.integers(classes.size)]
        members = by_class[c]
        i, j = members[rng.choice(members.size, size=2, replace=False)]
        k = int(rng.integers(n))
        if labels[k] == c:
            continue
        key = (int(i), int(j), k)
        if key in seen:
            continue
        seen.add(key)
        out.append(Comparison(int(i), int(j), int(i), k, 1))
    return ComparisonSet(out, n)


def _parse_rows(path: Path) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append((lineno, [f.strip() for f in line.split(",")]))
    if rows:
        # optional header: drop the first row when it is not numeric
        try:
            [int(v) for v in rows[0][1]]
        except ValueError:
            rows = rows[1:]
    return rows


def _to_comparison(fields: list[str], lineno: int, n: int) -> Comparison | None:
    try:
        nums = [int(v) for v in fields]
    except ValueError as exc:
        raise ValueError(f"line {lineno}: malformed row {fields}") from exc
    if len(nums) == 3:
        i, j, k = nums
        l, y = i, 1
    elif len(nums) == 5:
        i, j, l, k, y = nums
    else:
        raise ValueError(f"line {lineno}: expected 3 or 5 fields, got {len(nums)}")
    if y == 0:
        logger.warning("line %d: tied label y=0 rejected", lineno)
        return None
    if y not in (1, -1):
        raise ValueError(f"line {lineno}: label must be -1, 0 or +1, got {y}")
    for idx in (i, j, l, k):
        if not (1 <= idx <= n):
            raise IndexError(f"line {lineno}: index {idx} out of range for n={n}")
    return Comparison(i - 1, j - 1, l - 1, k - 1, y)


def load_triplets(path, n: int) -> ComparisonSet:
    """Read `i,j,k` rows (1-based, label +1: i closer to j than to k)."""
    return load_quadruplets(path, n)


def load_quadruplets(path, n: int) -> ComparisonSet:
    """Read `i,j,k` or `i,j,l,k,y` rows; duplicates dropped with a logged count."""
    rows = _parse_rows(Path(path))
    comparisons = []
    for lineno, fields in rows:
        q = _to_comparison(fields, lineno, n)
        if q is not None:
            comparisons.append(q)
    return ComparisonSet(comparisons, n)


def save_comparisons(path, Q: ComparisonSet) -> None:
    """Write 1-based CSV rows: `i,j,k` in triplet mode, else `i,j,l,k,1`."""
    with open(path, "w", encoding="utf-8") as fh:
        for q in Q:
            if Q.triplet_mode:
                fh.write(f"{q.i + 1},{q.j + 1},{q.k + 1}\n")
            else:
                fh.write(f"{q.i + 1},{q.j + 1},{q.l + 1},{q.k + 1},1\n")


def load_distance_matrix(path) -> np.ndarray:
    """Read an n x n comma-separated distance matrix."""
    D = np.loadtxt(path, delimiter=",", dtype=float, comments="#")
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distance matrix must be square, got {D.shape}")
    return D


def eurodist() -> tuple[list[str], np.ndarray]:
    """Bundled 21-city European road-distance matrix (km) and city names.

    Distances are great-circle city-center distances scaled by 1.2 to
    approximate road travel; see datasets/README for provenance.
    """
    pkg = resources.files("ordembed") / "datasets"
    names = [
        s.strip()
        for s in (pkg / "eurodist_cities.txt").read_text(encoding="utf-8").splitlines()
        if s.strip()
    ]
    with resources.as_file(pkg / "eurodist.csv") as p:
        D = load_distance_matrix(p)
    if len(names) != D.shape[0]:
        raise RuntimeError("bundled city list does not match matrix size")
    return names, D
