"""Evaluation: held-out comparison error, Procrustes alignment, retrieval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ComparisonSet, Embedding


def generalization_error(X: Embedding | np.ndarray, Q: ComparisonSet) -> float:
    """Fraction of comparisons whose margin d2(i,j) - d2(l,k) is >= 0.

    A zero margin counts as an error: the embedding expresses no preference,
    so it cannot be credited with the asserted ordering.
    """
    if len(Q) == 0:
        raise ValueError("cannot evaluate on an empty comparison set")
    data = X.data if isinstance(X, Embedding) else np.asarray(X, dtype=float)
    diff_ij = data[:, Q.i] - data[:, Q.j]
    diff_lk = data[:, Q.l] - data[:, Q.k]
    margins = np.sum(diff_ij * diff_ij, axis=0) - np.sum(diff_lk * diff_lk, axis=0)
    return float(np.mean(margins >= 0.0))


def procrustes_align(
    X: np.ndarray, Y: np.ndarray, allow_scaling: bool = True
) -> tuple[np.ndarray, float]:
    """Align X to reference Y over rotations/reflections, translation and
    (optionally) uniform scale; returns (aligned X, residual error).

    The residual is ||aligned - Yc||_F / ||Yc||_F where Yc is the centered
    reference, so 0 means a perfect match up to the allowed transforms.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    mx = X.mean(axis=1, keepdims=True)
    my = Y.mean(axis=1, keepdims=True)
    Xc = X - mx
    Yc = Y - my
    norm_y = np.linalg.norm(Yc)
    if norm_y == 0.0:
        raise ValueError("reference embedding is degenerate (all points equal)")
    # orthogonal map R minimizing ||R Xc - Yc||_F: R = U V^T from svd(Yc Xc^T)
    U, s, Vt = np.linalg.svd(Yc @ Xc.T)
    R = U @ Vt
    if allow_scaling:
        denom = float(np.sum(Xc * Xc))
        scale = float(np.sum(s)) / denom if denom > 0 else 1.0
    else:
        scale = 1.0
    aligned = scale * (R @ Xc) + my
    residual = float(np.linalg.norm(aligned - my - Yc) / norm_y)
    return aligned, residual


@dataclass(frozen=True)
class MetricsReport:
    precision_at: dict[int, float]
    recall_at: dict[int, float]
    mean_average_precision: float
    n_queries: int

    def summary(self) -> str:
        parts = [f"mAP={self.mean_average_precision:.4f}"]
        for k in sorted(self.precision_at):
            parts.append(f"P@{k}={self.precision_at[k]:.4f}")
        for k in sorted(self.recall_at):
            parts.append(f"R@{k}={self.recall_at[k]:.4f}")
        return " ".join(parts)


def retrieval_metrics(
    X: Embedding | np.ndarray,
    labels: np.ndarray,
    ks: tuple[int, ...] = (1, 5, 10),
) -> MetricsReport:
    """Leave-one-out retrieval by Euclidean distance in the embedding.

    Each point queries the remaining points; relevant = same label.  Ties in
    distance are broken by ascending gallery index.  Average precision is the
    discrete sum of precision * recall-increment over the ranked list.
    """
    data = X.data if isinstance(X, Embedding) else np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n = data.shape[1]
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},)")
    sq = np.sum(data * data, axis=0)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (data.T @ data)
    precisions = {k: [] for k in ks}
    recalls = {k: [] for k in ks}
    aps = []
    for q in range(n):
        gallery = np.concatenate([np.arange(q), np.arange(q + 1, n)])
        rel_total = int(np.sum(labels[gallery] == labels[q]))
        if rel_total == 0:
            continue  # query with no relevant items contributes nothing
        # stable sort on distance keeps ascending gallery index on ties
        order = gallery[np.argsort(D2[q, gallery], kind="stable")]
        rel = (labels[order] == labels[q]).astype(float)
        hits = np.cumsum(rel)
        ranks = np.arange(1, rel.size + 1)
        for k in ks:
            kk = min(k, rel.size)
            precisions[k].append(hits[kk - 1] / k)
            recalls[k].append(hits[kk - 1] / rel_total)
        prec_at_rank = hits / ranks
        aps.append(float(np.sum(prec_at_rank * rel) / rel_total))
    if not aps:
        raise ValueError("no query has any relevant gallery item")
    return MetricsReport(
        precision_at={k: float(np.mean(v)) for k, v in precisions.items()},
        recall_at={k: float(np.mean(v)) for k, v in recalls.items()},
        mean_average_precision=float(np.mean(aps)),
        n_queries=len(aps),
    )
