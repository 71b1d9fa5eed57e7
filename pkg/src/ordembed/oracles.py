"""Concrete finite-sum oracles: ordinal losses and small test problems."""

from __future__ import annotations

import numpy as np

from .core import ComparisonSet, Embedding
from .losses import LossModel, batch_gradient, batch_losses, full_gradient


class ComparisonOracle:
    """Finite-sum view of an ordinal-embedding objective.

    Points are p x n matrices; component i is the loss of the i-th
    comparison in Q.
    """

    def __init__(self, model: LossModel, Q: ComparisonSet, p: int):
        if len(Q) == 0:
            raise ValueError("empty comparison set")
        self.model = model
        self.Q = Q
        self.p = p
        self.sample_count = len(Q)

    def _wrap(self, x: np.ndarray) -> Embedding:
        return Embedding(x)

    def objective(self, x: np.ndarray) -> float:
        return float(np.mean(batch_losses(self.model, self._wrap(x), self.Q)))

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return full_gradient(self.model, self._wrap(x), self.Q)

    def component_grad(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        return batch_gradient(self.model, self._wrap(x), self.Q, indices)


class QuadraticOracle:
    """f_i(x) = 0.5 x' diag(d) x + c_i' x with the c_i summing to zero.

    The mean objective is 0.5 x' diag(d) x, minimized at 0 when d > 0.
    Per-component smoothness constant is max|d|; the full Hessian has
    eigenvalues d.
    """

    def __init__(self, diag: np.ndarray, shifts: np.ndarray | None = None, n_components: int = 5):
        self.diag = np.asarray(diag, dtype=float)
        dim = self.diag.size
        if shifts is None:
            shifts = np.zeros((n_components, dim))
        self.shifts = np.asarray(shifts, dtype=float)
        if self.shifts.ndim != 2 or self.shifts.shape[1] != dim:
            raise ValueError("shifts must be (n_components, dim)")
        self.shifts = self.shifts - self.shifts.mean(axis=0)  # zero-mean by construction
        self.sample_count = self.shifts.shape[0]

    @classmethod
    def random(cls, diag: np.ndarray, n_components: int, seed: int, shift_scale: float = 1.0):
        rng = np.random.default_rng(seed)
        shifts = shift_scale * rng.standard_normal((n_components, np.asarray(diag).size))
        return cls(diag, shifts)

    @property
    def L(self) -> float:
        return float(np.max(np.abs(self.diag)))

    @property
    def mu(self) -> float:
        return float(np.min(np.abs(self.diag)))

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.diag * x))

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return self.diag * x

    def component_grad(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.intp)
        return self.diag * x + self.shifts[indices].mean(axis=0)


class SinePLOracle:
    """f(x) = x^2 + 3 sin^2(x), a non-convex function with a global optimum
    at 0 that still admits linear convergence rates (PL constant 1/32).

    Component gradients carry zero-mean shifts so the oracle is genuinely
    stochastic while the mean objective is unchanged.
    """

    def __init__(self, n_components: int = 5, noise: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        shifts = noise * rng.standard_normal(n_components)
        self.shifts = shifts - shifts.mean()
        self.sample_count = n_components

    def objective(self, x: np.ndarray) -> float:
        v = float(np.asarray(x).ravel()[0])
        return v * v + 3.0 * np.sin(v) ** 2

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        v = np.asarray(x, dtype=float)
        return 2.0 * v + 3.0 * np.sin(2.0 * v)

    def component_grad(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.intp)
        return self.full_grad(x) + self.shifts[indices].mean()
