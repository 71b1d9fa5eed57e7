"""Finite-sum stochastic optimizers with the stabilized Barzilai-Borwein step.

The central routine is :func:`svrg_sbb`: variance-reduced stochastic
gradient descent whose per-epoch step size is derived from successive
snapshots and full gradients,

    eta_s = (1/m) * ||dx||^2 / (|<dx, dy>| + epsilon * ||dx||^2),

which stays positive and bounded even when the raw Barzilai-Borwein ratio
``||dx||^2 / <dx, dy>`` blows up or turns negative on non-convex
objectives.  A modular wrapper restarts the solver from its own snapshot,
fixed-step SVRG, SGD and full-batch gradient descent serve as baselines.

All optimizers run against a :class:`FiniteSumOracle` so quadratic test
problems plug in alongside the ordinal-embedding losses.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# checkpoint_fn(epoch, checkpoint_index, x, step_size, cumulative_evals)
CheckpointFn = Callable[[int, int, np.ndarray, float, int], None]


class FiniteSumOracle(Protocol):
    """Objective f(x) = (1/n) sum_i f_i(x) exposed through batched gradients."""

    sample_count: int

    def objective(self, x: np.ndarray) -> float: ...

    def full_grad(self, x: np.ndarray) -> np.ndarray: ...

    def component_grad(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Mean gradient of the components in ``indices`` at ``x``."""
        ...


class StepSizeSignal(Exception):
    """Base for recoverable step-size conditions."""


class Stagnation(StepSizeSignal):
    """dx = 0: iterate did not move between snapshots."""


class DegenerateCurvature(StepSizeSignal):
    """epsilon = 0 and <dx, dy> = 0: raw curvature estimate is undefined."""


class DivergenceError(RuntimeError):
    """Optimizer blew up; carries the last finite snapshot."""

    def __init__(self, message: str, last_snapshot: np.ndarray, epoch: int):
        super().__init__(message)
        self.last_snapshot = last_snapshot
        self.epoch = epoch


def bb_step_raw(dx: np.ndarray, dy: np.ndarray) -> float | None:
    """Raw Barzilai-Borwein ratio ||dx||^2 / <dx, dy>; None when undefined."""
    dx = np.asarray(dx, dtype=float).ravel()
    dy = np.asarray(dy, dtype=float).ravel()
    if dx.shape != dy.shape:
        raise ValueError(f"shape mismatch: {dx.shape} vs {dy.shape}")
    denom = float(dx @ dy)
    if denom == 0.0:
        return None
    return float(dx @ dx) / denom


def sbb_step(dx: np.ndarray, dy: np.ndarray, epsilon: float, m: int) -> float:
    """Stabilized BB step (1/m) * ||dx||^2 / (|<dx, dy>| + epsilon * ||dx||^2)."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    dx = np.asarray(dx, dtype=float).ravel()
    dy = np.asarray(dy, dtype=float).ravel()
    if dx.shape != dy.shape:
        raise ValueError(f"shape mismatch: {dx.shape} vs {dy.shape}")
    sq = float(dx @ dx)
    if sq == 0.0:
        raise Stagnation("dx = 0, keep previous step size")
    inner = abs(float(dx @ dy))
    denom = inner + epsilon * sq
    if denom == 0.0:
        raise DegenerateCurvature("epsilon = 0 with <dx, dy> = 0")
    return sq / denom / m


@dataclass
class SbbConfig:
    """Hyperparameters shared by the SVRG variants.

    ``epsilon=None`` picks the stabilizer automatically as one tenth of the
    smoothness constant estimated from the first two full gradients;
    ``epsilon=0`` selects the unstabilized SBB step.  With
    ``fair_accounting`` on, mini-batch runs shrink the inner loop to
    ceil(m / b) iterations so every epoch costs the same number of
    component-gradient evaluations as a b=1 run.
    """

    m: int
    b: int = 1
    S: int = 10
    epsilon: float | None = None
    eta0: float = 1e-2
    seed: int = 0
    fair_accounting: bool = True
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.m < 1 or self.b < 1 or self.S < 1:
            raise ValueError("need m >= 1, b >= 1, S >= 1")
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def inner_iterations(self) -> int:
        return math.ceil(self.m / self.b) if self.fair_accounting else self.m


@dataclass
class EpochTrace:
    epoch: int
    step_size: float
    grad_norm: float
    objective: float
    evals: int
    wall_s: float


@dataclass
class RunResult:
    x_out: np.ndarray
    x_final: np.ndarray
    trace: list[EpochTrace]
    epsilon_used: float | None = None
    module_snapshots: list[np.ndarray] = field(default_factory=list)


def svrg_direction(
    oracle: FiniteSumOracle,
    batch: np.ndarray,
    x: np.ndarray,
    x_snapshot: np.ndarray,
    g_snapshot: np.ndarray,
) -> np.ndarray:
    """Variance-reduced direction u = mean_i (grad_i(x) - grad_i(xs)) + g."""
    return (
        oracle.component_grad(batch, x)
        - oracle.component_grad(batch, x_snapshot)
        + g_snapshot
    )


def _check_finite(x: np.ndarray, snapshot: np.ndarray, epoch: int) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(
            f"non-finite iterate at epoch {epoch}", snapshot.copy(), epoch
        )


def _svrg_loop(
    oracle: FiniteSumOracle,
    x0: np.ndarray,
    cfg: SbbConfig,
    step_rule: Callable[[int, np.ndarray | None, np.ndarray | None, float], float],
    checkpoint_fn: CheckpointFn | None,
    evals_offset: int = 0,
) -> RunResult:
    """Shared epoch/inner-loop skeleton for SVRG variants.

    ``step_rule(s, dx, dy, prev_eta)`` returns eta_s (the per-update step
    before the mini-batch multiplier b).
    """
    n = oracle.sample_count
    rng = np.random.default_rng(cfg.seed)
    n_inner = cfg.inner_iterations
    out_pick = int(rng.integers(cfg.S * n_inner))  # uniform over all inner iterates
    ckpt_steps = sorted({max(1, (n_inner * c) // 3) for c in (1, 2, 3)})

    x_tilde = np.array(x0, dtype=float)
    x_prev_tilde = None
    g_prev = None
    obj0 = oracle.objective(x_tilde)
    eta = cfg.eta0 / cfg.m
    x_out = x_tilde.copy()
    trace: list[EpochTrace] = []
    evals = evals_offset
    t_start = time.perf_counter()
    counter = 0

    for s in range(cfg.S):
        g = oracle.full_grad(x_tilde)
        evals += n
        if s > 0:
            eta = step_rule(s, x_tilde - x_prev_tilde, g - g_prev, eta)
        else:
            eta = step_rule(s, None, None, eta)
        x = x_tilde.copy()
        for t in range(n_inner):
            batch = rng.integers(0, n, size=cfg.b)
            u = svrg_direction(oracle, batch, x, x_tilde, g)
            x = x - (cfg.b * eta) * u
            _check_finite(x, x_tilde, s)
            evals += 2 * cfg.b
            counter += 1
            if counter - 1 == out_pick:
                x_out = x.copy()
            if (t + 1) in ckpt_steps:
                if checkpoint_fn is not None:
                    ckpt = ckpt_steps.index(t + 1) + 1
                    checkpoint_fn(s, ckpt, x, eta, evals)
        x_prev_tilde, g_prev = x_tilde, g
        x_tilde = x
        _check_finite(x_tilde, x_prev_tilde, s)
        obj = oracle.objective(x_tilde)
        if not np.isfinite(obj) or obj > cfg.divergence_factor * max(abs(obj0), 1.0):
            raise DivergenceError(
                f"objective blew up at epoch {s}: {obj:.3e}", x_prev_tilde.copy(), s
            )
        trace.append(
            EpochTrace(
                epoch=s,
                step_size=eta,
                grad_norm=float(np.linalg.norm(g.ravel())),
                objective=obj,
                evals=evals,
                wall_s=time.perf_counter() - t_start,
            )
        )
    return RunResult(x_out=x_out, x_final=x_tilde, trace=trace)


def svrg_sbb(
    oracle: FiniteSumOracle,
    cfg: SbbConfig,
    x0: np.ndarray,
    checkpoint_fn: CheckpointFn | None = None,
    evals_offset: int = 0,
) -> RunResult:
    """Mini-batch SVRG with the stabilized BB step size.

    Epoch 0 uses eta0/m; later epochs derive the step from the snapshot and
    full-gradient differences.  Stagnation or degenerate curvature keeps
    the previous step size.  The returned ``x_out`` is drawn uniformly from
    all inner iterates; ``x_final`` is the last snapshot.
    """
    state = {"epsilon": cfg.epsilon}

    def step_rule(s, dx, dy, prev_eta):
        if s == 0:
            return cfg.eta0 / cfg.m
        if state["epsilon"] is None:
            # crude smoothness estimate from the first snapshot pair
            nx = float(np.linalg.norm(dx.ravel()))
            ny = float(np.linalg.norm(dy.ravel()))
            state["epsilon"] = 0.1 * ny / nx if nx > 0 and ny > 0 else 0.1
        try:
            return sbb_step(dx, dy, state["epsilon"], cfg.m)
        except StepSizeSignal as sig:
            logger.warning("epoch %d: %s", s, sig)
            return prev_eta

    result = _svrg_loop(oracle, x0, cfg, step_rule, checkpoint_fn, evals_offset)
    result.epsilon_used = state["epsilon"]
    return result


def svrg_fixed(
    oracle: FiniteSumOracle,
    eta: float,
    m: int,
    b: int,
    S: int,
    seed: int,
    x0: np.ndarray,
    fair_accounting: bool = True,
    checkpoint_fn: CheckpointFn | None = None,
) -> RunResult:
    """SVRG with the constant per-update step eta/m."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    cfg = SbbConfig(m=m, b=b, S=S, eta0=eta, seed=seed, fair_accounting=fair_accounting)
    return _svrg_loop(oracle, x0, cfg, lambda s, dx, dy, prev: eta / m, checkpoint_fn)


def svrg_sbb_modular(
    oracle: FiniteSumOracle,
    cfg: SbbConfig,
    K: int,
    x0: np.ndarray,
    checkpoint_fn: CheckpointFn | None = None,
) -> RunResult:
    """K sequential SVRG-SBB restarts, each warm-started from the last snapshot.

    Every module re-derives its step sizes from scratch, so the total
    component-gradient count equals K times the cost of one S-epoch run.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    x = np.array(x0, dtype=float)
    trace: list[EpochTrace] = []
    snapshots: list[np.ndarray] = []
    result = None
    evals = 0
    for k in range(K):
        module_cfg = SbbConfig(
            m=cfg.m,
            b=cfg.b,
            S=cfg.S,
            epsilon=cfg.epsilon,
            eta0=cfg.eta0,
            seed=cfg.seed + k,
            fair_accounting=cfg.fair_accounting,
            divergence_factor=cfg.divergence_factor,
        )
        if checkpoint_fn is not None:
            # report global epoch numbers and cumulative evaluation counts
            def module_ckpt(s, ckpt, xc, eta, ev, _k=k):
                checkpoint_fn(_k * cfg.S + s, ckpt, xc, eta, ev)
        else:
            module_ckpt = None
        result = svrg_sbb(oracle, module_cfg, x, module_ckpt, evals_offset=evals)
        x = result.x_final
        snapshots.append(x.copy())
        for row in result.trace:
            trace.append(
                EpochTrace(
                    epoch=k * cfg.S + row.epoch,
                    step_size=row.step_size,
                    grad_norm=row.grad_norm,
                    objective=row.objective,
                    evals=row.evals,
                    wall_s=row.wall_s,
                )
            )
        evals = trace[-1].evals
    return RunResult(
        x_out=x,
        x_final=x,
        trace=trace,
        epsilon_used=result.epsilon_used if result else cfg.epsilon,
        module_snapshots=snapshots,
    )


@dataclass
class StepSchedule:
    """Constant or 1/t-decaying SGD step size."""

    kind: str = "constant"  # "constant" | "inv_t"
    eta: float = 1e-2
    decay: float = 1e-3

    def at(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta
        if self.kind == "inv_t":
            return self.eta / (1.0 + self.decay * t)
        raise ValueError(f"unknown schedule kind {self.kind!r}")


def sgd(
    oracle: FiniteSumOracle,
    schedule: StepSchedule,
    epochs: int,
    seed: int,
    x0: np.ndarray,
    batch_size: int = 1,
    steps_per_epoch: int | None = None,
    divergence_factor: float = 1e6,
    checkpoint_fn: CheckpointFn | None = None,
) -> RunResult:
    """Plain stochastic gradient descent.

    ``steps_per_epoch`` defaults to the sample count; the experiment
    harness raises it so SGD spends the same per-epoch gradient budget as
    the SVRG variants.
    """
    n = oracle.sample_count
    rng = np.random.default_rng(seed)
    steps = steps_per_epoch if steps_per_epoch is not None else n
    ckpt_steps = sorted({max(1, (steps * c) // 3) for c in (1, 2, 3)})
    x = np.array(x0, dtype=float)
    obj0 = oracle.objective(x)
    trace: list[EpochTrace] = []
    evals = 0
    t_global = 0
    t_start = time.perf_counter()
    for s in range(epochs):
        snapshot = x.copy()
        eta = schedule.at(t_global)
        for t in range(steps):
            batch = rng.integers(0, n, size=batch_size)
            eta = schedule.at(t_global)
            x = x - eta * oracle.component_grad(batch, x)
            _check_finite(x, snapshot, s)
            evals += batch_size
            t_global += 1
            if (t + 1) in ckpt_steps:
                if checkpoint_fn is not None:
                    ckpt = ckpt_steps.index(t + 1) + 1
                    checkpoint_fn(s, ckpt, x, eta, evals)
        _check_finite(x, snapshot, s)
        obj = oracle.objective(x)
        if not np.isfinite(obj) or obj > divergence_factor * max(abs(obj0), 1.0):
            raise DivergenceError(f"objective blew up at epoch {s}", snapshot, s)
        trace.append(
            EpochTrace(
                epoch=s,
                step_size=eta,
                grad_norm=float(np.linalg.norm(oracle.full_grad(x).ravel())),
                objective=obj,
                evals=evals,
                wall_s=time.perf_counter() - t_start,
            )
        )
    return RunResult(x_out=x, x_final=x, trace=trace)


def batch_gd(
    oracle: FiniteSumOracle,
    eta: float,
    iterations: int,
    x0: np.ndarray,
    divergence_factor: float = 1e6,
    checkpoint_fn: CheckpointFn | None = None,
) -> RunResult:
    """Full-gradient descent; each iteration costs sample_count evaluations."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    n = oracle.sample_count
    x = np.array(x0, dtype=float)
    obj0 = oracle.objective(x)
    trace: list[EpochTrace] = []
    evals = 0
    t_start = time.perf_counter()
    for it in range(iterations):
        snapshot = x.copy()
        g = oracle.full_grad(x)
        x = x - eta * g
        evals += n
        _check_finite(x, snapshot, it)
        obj = oracle.objective(x)
        if not np.isfinite(obj) or obj > divergence_factor * max(abs(obj0), 1.0):
            raise DivergenceError(f"objective blew up at iteration {it}", snapshot, it)
        if checkpoint_fn is not None:
            checkpoint_fn(it, 1, x, eta, evals)
        trace.append(
            EpochTrace(
                epoch=it,
                step_size=eta,
                grad_norm=float(np.linalg.norm(g.ravel())),
                objective=obj,
                evals=evals,
                wall_s=time.perf_counter() - t_start,
            )
        )
    return RunResult(x_out=x, x_final=x, trace=trace)


def minibatch_size_bound(m: int, L: float, epsilon: float) -> float:
    """Largest admissible mini-batch size for the sublinear-rate guarantee.

    Returns min( m eps^2 / (L^2 (1 + sqrt(1 + 4 eps / L))),
                 m eps / (2 L (1 + sqrt(1 + 4 L / eps))) ).
    """
    if L <= 0 or epsilon <= 0:
        raise ValueError("need L > 0 and epsilon > 0")
    first = m * epsilon**2 / (L**2 * (1.0 + math.sqrt(1.0 + 4.0 * epsilon / L)))
    second = m * epsilon / (2.0 * L * (1.0 + math.sqrt(1.0 + 4.0 * L / epsilon)))
    return min(first, second)


def check_minibatch_size(b: int, m: int, L: float, epsilon: float) -> bool:
    """True when b satisfies the admissibility bound for a user-supplied L."""
    return b < minibatch_size_bound(m, L, epsilon)
