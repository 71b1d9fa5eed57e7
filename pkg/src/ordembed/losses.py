"""Per-comparison losses and gradients over the embedding matrix.

Four objectives are supported, all functions of the margin
``d^2(i, j) - d^2(l, k)`` of a label +1 comparison:

* GNMDS: hinge ``max(0, 1 + margin)``.
* CKL:   negative log of ``exp(d2_lk) / (exp(d2_ij) + exp(d2_lk))``.  With
  no scale parameter this crowd-kernel probability reduces to the same
  logistic form as STE.
* STE:   negative log of ``exp(-d2_ij) / (exp(-d2_ij) + exp(-d2_lk))``.
* TSTE:  negative log of a Student-t kernel ratio with ``alpha`` degrees
  of freedom.

Everything is evaluated in the log domain so large squared distances do
not overflow, and gradients are assembled from the at-most-four embedding
columns a comparison touches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Comparison, ComparisonSet, Embedding


class LossKind(enum.Enum):
    GNMDS = "gnmds"
    CKL = "ckl"
    STE = "ste"
    TSTE = "tste"


@dataclass(frozen=True)
class LossModel:
    """Objective selector; ``alpha`` is the TSTE degrees of freedom."""

    kind: LossKind
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind is LossKind.TSTE and not self.alpha > 0:
            raise ValueError(f"TSTE needs alpha > 0, got {self.alpha}")

    @classmethod
    def for_dimension(cls, kind: LossKind, p: int) -> "LossModel":
        """Default TSTE degrees of freedom: max(p - 1, 1)."""
        return cls(kind, alpha=float(max(p - 1, 1)))


@dataclass(frozen=True)
class PerComparisonGrad:
    """Gradient of one comparison's loss w.r.t. the touched columns of X."""

    indices: tuple[int, ...]
    columns: np.ndarray  # shape (p, len(indices))

    def scatter(self, p: int, n: int) -> np.ndarray:
        full = np.zeros((p, n))
        full[:, list(self.indices)] = self.columns
        return full


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + exp(z)) with max-subtraction against overflow
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _pair_sqdist(X: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = X[:, a] - X[:, b]
    return np.einsum("ij,ij->j", diff, diff)


def _loss_and_coeffs(model: LossModel, d2_ij, d2_lk, want_grad: bool):
    """Vectorized loss values plus d(loss)/d(d2_ij) and d(loss)/d(d2_lk)."""
    kind = model.kind
    if kind is LossKind.GNMDS:
        margin = d2_ij - d2_lk
        vals = np.maximum(0.0, 1.0 + margin)
        if not want_grad:
            return vals, None, None
        # active branch taken at the hinge boundary itself
        active = (1.0 + margin >= 0.0).astype(float)
        return vals, active, -active
    if kind in (LossKind.CKL, LossKind.STE):
        margin = d2_ij - d2_lk
        vals = _softplus(margin)
        if not want_grad:
            return vals, None, None
        sig = _sigmoid(margin)
        return vals, sig, -sig
    if kind is LossKind.TSTE:
        a = model.alpha
        c = (a + 1.0) / 2.0
        z = c * (np.log1p(d2_ij / a) - np.log1p(d2_lk / a))
        vals = _softplus(z)
        if not want_grad:
            return vals, None, None
        sig = _sigmoid(z)
        return vals, sig * c / (a + d2_ij), -sig * c / (a + d2_lk)
    raise ValueError(f"unknown loss kind {kind}")


def _check_finite(X: Embedding) -> np.ndarray:
    data = X.data
    if not np.all(np.isfinite(data)):
        raise ValueError("embedding contains non-finite entries")
    return data


def batch_losses(model: LossModel, X: Embedding, Q: ComparisonSet) -> np.ndarray:
    """Loss value of every comparison in Q."""
    data = _check_finite(X)
    d2_ij = _pair_sqdist(data, Q.i, Q.j)
    d2_lk = _pair_sqdist(data, Q.l, Q.k)
    vals, _, _ = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=False)
    return vals


def loss(model: LossModel, X: Embedding, q: Comparison) -> float:
    """Loss of a single comparison; label -1 swaps (i, j) and (l, k)."""
    q = q.canonical()
    data = _check_finite(X)
    d2_ij = _pair_sqdist(data, np.array([q.i]), np.array([q.j]))
    d2_lk = _pair_sqdist(data, np.array([q.l]), np.array([q.k]))
    vals, _, _ = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=False)
    return float(vals[0])


def grad(model: LossModel, X: Embedding, q: Comparison) -> PerComparisonGrad:
    """Analytic gradient of ``loss`` w.r.t. the touched columns of X."""
    q = q.canonical()
    data = _check_finite(X)
    d2_ij = _pair_sqdist(data, np.array([q.i]), np.array([q.j]))
    d2_lk = _pair_sqdist(data, np.array([q.l]), np.array([q.k]))
    _, g_ij, g_lk = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=True)
    diff_ij = data[:, q.i] - data[:, q.j]
    diff_lk = data[:, q.l] - data[:, q.k]
    acc: dict[int, np.ndarray] = {}

    def add(idx: int, vec: np.ndarray) -> None:
        acc[idx] = acc.get(idx, 0.0) + vec

    add(q.i, 2.0 * g_ij[0] * diff_ij)
    add(q.j, -2.0 * g_ij[0] * diff_ij)
    add(q.l, 2.0 * g_lk[0] * diff_lk)
    add(q.k, -2.0 * g_lk[0] * diff_lk)
    indices = tuple(sorted(acc))
    columns = np.column_stack([acc[t] for t in indices])
    return PerComparisonGrad(indices=indices, columns=columns)


def full_objective(model: LossModel, X: Embedding, Q: ComparisonSet) -> float:
    """Mean per-comparison loss over Q."""
    if len(Q) == 0:
        raise ValueError("empty comparison set")
    return float(np.mean(batch_losses(model, X, Q)))


def _scatter_grads(data, i, j, l, k, g_ij, g_lk, out):
    w_ij = (2.0 * g_ij)[:, None] * (data[:, i] - data[:, j]).T
    w_lk = (2.0 * g_lk)[:, None] * (data[:, l] - data[:, k]).T
    outT = out.T
    np.add.at(outT, i, w_ij)
    np.add.at(outT, j, -w_ij)
    np.add.at(outT, l, w_lk)
    np.add.at(outT, k, -w_lk)
    return out


def batch_gradient(
    model: LossModel, X: Embedding, Q: ComparisonSet, indices: np.ndarray | None = None
) -> np.ndarray:
    """Mean gradient over a subset of Q (all of it when indices is None)."""
    data = _check_finite(X)
    if indices is None:
        i, j, l, k = Q.i, Q.j, Q.l, Q.k
    else:
        indices = np.asarray(indices, dtype=np.intp)
        i, j, l, k = Q.i[indices], Q.j[indices], Q.l[indices], Q.k[indices]
    count = len(i)
    if count == 0:
        raise ValueError("empty comparison set")
    d2_ij = _pair_sqdist(data, i, j)
    d2_lk = _pair_sqdist(data, l, k)
    _, g_ij, g_lk = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=True)
    out = np.zeros_like(data)
    _scatter_grads(data, i, j, l, k, g_ij, g_lk, out)
    out /= count
    return out


def full_gradient(model: LossModel, X: Embedding, Q: ComparisonSet) -> np.ndarray:
    """Mean of per-comparison gradients, scattered into a p x n matrix."""
    return batch_gradient(model, X, Q, indices=None)
