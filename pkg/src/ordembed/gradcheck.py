"""Finite-difference verification of the per-comparison loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Comparison, Embedding
from .losses import LossKind, LossModel, _loss_and_coeffs, grad


def _comparison_value(model: LossModel, X: np.ndarray, qc: Comparison) -> float:
    d2_ij = np.array([np.sum((X[:, qc.i] - X[:, qc.j]) ** 2)])
    d2_lk = np.array([np.sum((X[:, qc.l] - X[:, qc.k]) ** 2)])
    vals, _, _ = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=False)
    return float(vals[0])


def finite_difference_gradient(
    model: LossModel, X: np.ndarray, q: Comparison, h: float = 1e-5
) -> np.ndarray:
    """Central differences of the single-comparison loss in every coordinate
    of the (at most four) columns the comparison touches."""
    X = np.array(X, dtype=float)
    out = np.zeros_like(X)
    qc = q.canonical()
    for col in {qc.i, qc.j, qc.l, qc.k}:
        for row in range(X.shape[0]):
            orig = X[row, col]
            X[row, col] = orig + h
            plus = _comparison_value(model, X, qc)
            X[row, col] = orig - h
            minus = _comparison_value(model, X, qc)
            X[row, col] = orig
            out[row, col] = (plus - minus) / (2.0 * h)
    return out


def relative_error(ga: np.ndarray, gf: np.ndarray) -> float:
    denom = max(1e-12, float(np.linalg.norm(ga) + np.linalg.norm(gf)))
    return float(np.linalg.norm(ga - gf)) / denom


@dataclass(frozen=True)
class GradCheckReport:
    kind: LossKind
    trials: int
    skipped: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.kind.name}: max relative error {self.max_error:.3e} "
            f"(tol {self.tolerance:.1e}, {self.trials} trials, {self.skipped} skipped)"
        )


def check_gradients(
    model: LossModel,
    trials: int = 1000,
    tolerance: float = 1e-6,
    p: int = 10,
    n: int = 6,
    seed: int = 0,
    h: float = 1e-5,
    kink_margin: float = 1e-3,
    _corrupt: float = 0.0,
) -> GradCheckReport:
    """Random (X, q) trials comparing analytic and finite-difference gradients.

    Hinge-loss trials with |1 + margin| <= ``kink_margin`` are skipped (the
    loss is not differentiable there) and replaced by fresh draws.
    ``_corrupt`` is a test hook that perturbs the analytic gradient.
    """
    rng = np.random.default_rng(seed)
    max_err = 0.0
    skipped = 0
    done = 0
    while done < trials:
        X = rng.standard_normal((p, n))
        i, j, l, k = rng.choice(n, size=4, replace=False)
        label = 1 if rng.random() < 0.5 else -1
        q = Comparison(int(i), int(j), int(l), int(k), label)
        emb = Embedding(X)
        if model.kind is LossKind.GNMDS:
            qc = q.canonical()
            d2ij = float(np.sum((X[:, qc.i] - X[:, qc.j]) ** 2))
            d2lk = float(np.sum((X[:, qc.l] - X[:, qc.k]) ** 2))
            if abs(1.0 + d2ij - d2lk) <= kink_margin:
                skipped += 1
                continue
        ga = grad(model, emb, q).scatter(p, n) + _corrupt
        gf = finite_difference_gradient(model, X, q, h=h)
        max_err = max(max_err, relative_error(ga, gf))
        done += 1
    return GradCheckReport(
        kind=model.kind, trials=trials, skipped=skipped,
        max_error=max_err, tolerance=tolerance,
    )
