"""Convex Gram-matrix baseline: projected gradient descent on the PSD cone.

The same scalar losses act on the linear functional
``<W_q, G> = (g_ii - g_ij - g_ji + g_jj) - (g_ll - g_lk - g_kl + g_kk)``,
which equals the squared-distance margin when G = X'X.  Every iteration
re-centers G and clamps negative eigenvalues, which is exactly the
per-iteration eigendecomposition cost the non-convex path avoids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ComparisonSet, Embedding
from .losses import LossModel, _loss_and_coeffs

SYM_TOL = 1e-10
MAX_EIG_N = 2000


@dataclass(frozen=True)
class GramState:
    """Symmetric n x n Gram matrix with a target embedding rank."""

    G: np.ndarray
    target_rank: int

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {G.shape}")
        _require_symmetric(G)
        if not (1 <= self.target_rank <= G.shape[0]):
            raise ValueError(f"target rank {self.target_rank} out of range")
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.G.shape[0]


def _require_symmetric(M: np.ndarray, tol: float = SYM_TOL) -> None:
    dev = np.max(np.abs(M - M.T)) if M.size else 0.0
    if dev > tol * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"matrix not symmetric (max deviation {dev:.3e})")


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _gram_margins(G: np.ndarray, Q: ComparisonSet):
    d = np.diag(G)
    d2_ij = d[Q.i] - G[Q.i, Q.j] - G[Q.j, Q.i] + d[Q.j]
    d2_lk = d[Q.l] - G[Q.l, Q.k] - G[Q.k, Q.l] + d[Q.k]
    return d2_ij, d2_lk


def gram_loss_grad(
    model: LossModel, state: GramState, Q: ComparisonSet
) -> tuple[float, np.ndarray]:
    """Mean loss over Q and its gradient with respect to G."""
    if len(Q) == 0:
        raise ValueError("empty comparison set")
    G = state.G
    d2_ij, d2_lk = _gram_margins(G, Q)
    vals, g_ij, g_lk = _loss_and_coeffs(model, d2_ij, d2_lk, want_grad=True)
    grad = np.zeros_like(G)
    n = state.n
    flat = grad.ravel()
    # scatter the +/-1 stencil of each comparison, scaled by the scalar coefficient
    np.add.at(flat, Q.i * n + Q.i, g_ij)
    np.add.at(flat, Q.j * n + Q.j, g_ij)
    np.add.at(flat, Q.i * n + Q.j, -g_ij)
    np.add.at(flat, Q.j * n + Q.i, -g_ij)
    np.add.at(flat, Q.l * n + Q.l, g_lk)
    np.add.at(flat, Q.k * n + Q.k, g_lk)
    np.add.at(flat, Q.l * n + Q.k, -g_lk)
    np.add.at(flat, Q.k * n + Q.l, -g_lk)
    grad /= len(Q)
    return float(np.mean(vals)), grad


def _eigh_checked(M: np.ndarray):
    if M.shape[0] > MAX_EIG_N:
        raise ValueError(
            f"dense eigendecomposition capped at n={MAX_EIG_N}; got {M.shape[0]}"
        )
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numeric edge
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc


def project_psd_centered(G: np.ndarray, target_rank: int | None = None) -> GramState:
    """Center G (pre/post-multiply by C) and clamp negative eigenvalues.

    The all-ones vector stays in the kernel, so the output is centered and
    PSD; among PSD matrices sharing the centered eigenbasis it is nearest
    to the centered input in Frobenius norm.
    """
    G = np.asarray(G, dtype=float)
    _require_symmetric(G)
    n = G.shape[0]
    C = centering_matrix(n)
    Gc = C @ G @ C
    Gc = 0.5 * (Gc + Gc.T)
    w, V = _eigh_checked(Gc)
    w = np.maximum(w, 0.0)
    P = (V * w) @ V.T
    P = 0.5 * (P + P.T)
    return GramState(P, target_rank if target_rank is not None else n)


def gram_to_embedding(state: GramState, p: int) -> Embedding:
    """Top-p spectral factor X with X'X the best rank-p PSD approximation."""
    n = state.n
    if not (1 <= p <= n):
        raise ValueError(f"p must be in [1, {n}], got {p}")
    w, V = _eigh_checked(state.G)
    order = np.argsort(w)[::-1][:p]
    w_top = np.maximum(w[order], 0.0)
    V_top = V[:, order]
    # deterministic sign: largest-magnitude entry of each eigenvector positive
    for c in range(p):
        col = V_top[:, c]
        lead = np.argmax(np.abs(col))
        if col[lead] < 0:
            V_top[:, c] = -col
    X = (np.sqrt(w_top)[:, None]) * V_top.T
    return Embedding(X)


def gram_to_distance(G: np.ndarray) -> np.ndarray:
    """Squared-distance matrix diag(G) 1' - 2 G + 1 diag(G)'."""
    G = np.asarray(G, dtype=float)
    _require_symmetric(G)
    d = np.diag(G)
    return d[:, None] - 2.0 * G + d[None, :]


def distance_to_gram(D: np.ndarray) -> np.ndarray:
    """Centered Gram matrix -(1/2) C D C of a squared-distance matrix."""
    D = np.asarray(D, dtype=float)
    _require_symmetric(D)
    if np.max(np.abs(np.diag(D))) > SYM_TOL:
        raise ValueError("squared-distance matrix must have zero diagonal")
    C = centering_matrix(D.shape[0])
    G = -0.5 * C @ D @ C
    return 0.5 * (G + G.T)


def classical_mds(D_squared: np.ndarray, p: int) -> Embedding:
    """Torgerson scaling: embed from a squared-distance matrix."""
    G = distance_to_gram(D_squared)
    return gram_to_embedding(GramState(G, p), p)


@dataclass
class ConvexTrace:
    iteration: int
    objective: float
    evals: int


def convex_solve(
    model: LossModel,
    Q: ComparisonSet,
    n: int,
    p: int,
    eta: float | None = None,
    iterations: int = 500,
    seed: int = 0,
    G0: np.ndarray | None = None,
    callback=None,
) -> tuple[Embedding, list[ConvexTrace]]:
    """Projected gradient descent over centered PSD Gram matrices.

    Default step size is 1 (the gradient is a mean over comparisons, so
    its scale is batch-size independent).  Returns the top-p spectral
    embedding of
    the final iterate plus a per-iteration objective trace; each iteration
    costs |Q| component evaluations.
    """
    if eta is None:
        eta = 1.0  # gradient is already a mean over comparisons
    if G0 is None:
        rng = np.random.default_rng(seed)
        X0 = 0.1 * rng.standard_normal((p, n))
        X0 = X0 - X0.mean(axis=1, keepdims=True)
        G0 = X0.T @ X0
    state = project_psd_centered(G0, p)
    trace: list[ConvexTrace] = []
    evals = 0
    obj0 = None
    for it in range(iterations):
        val, grad = gram_loss_grad(model, state, Q)
        evals += len(Q)
        if obj0 is None:
            obj0 = max(abs(val), 1.0)
        if not np.isfinite(val) or val > 1e6 * obj0:
            raise RuntimeError(f"convex solve diverged at iteration {it}")
        state = project_psd_centered(state.G - eta * grad, p)
        trace.append(ConvexTrace(iteration=it, objective=val, evals=evals))
        if callback is not None:
            callback(it, state, val, evals)
    return gram_to_embedding(state, p), trace
