"""Config-driven experiment runner: traces, summaries, threshold tables, plots.

Each seed produces a trace CSV with columns
``seed, epoch, checkpoint, step_size, train_loss, test_error, grad_evals, wall_ms``.
Everything except ``wall_ms`` is a deterministic function of (config, seed).
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, convex, data, evaluate, optim, oracles
from .config import ExperimentConfig, resolved_items
from .core import ComparisonSet, Embedding
from .losses import LossKind, LossModel

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "seed",
    "epoch",
    "checkpoint",
    "step_size",
    "train_loss",
    "test_error",
    "grad_evals",
    "wall_ms",
)


@dataclass
class SeedOutcome:
    seed: int
    rows: list[dict]
    embedding: Embedding | None
    diverged: bool
    error: str | None = None

    @property
    def final_test_error(self) -> float | None:
        return self.rows[-1]["test_error"] if self.rows else None


def make_loss_model(cfg: ExperimentConfig) -> LossModel:
    kind = LossKind[cfg.loss.upper()]
    if kind is LossKind.TSTE:
        if cfg.alpha is not None:
            return LossModel(kind, alpha=cfg.alpha)
        return LossModel.for_dimension(kind, cfg.dimension)
    return LossModel(kind)


def build_dataset(cfg: ExperimentConfig) -> tuple[ComparisonSet, ComparisonSet, int]:
    """Construct (train, test) comparison sets; noise touches train only."""
    total = cfg.train_count + cfg.test_count
    if cfg.dataset == "synthetic":
        X_true = data.gen_synthetic(
            data.SyntheticSpec(n=cfg.n, p=cfg.p, variance=cfg.variance, seed=cfg.data_seed)
        )
        Q = data.sample_triplets(X_true, total, seed=cfg.data_seed + 1)
        n = cfg.n
    elif cfg.dataset == "triplets":
        Q = data.load_quadruplets(cfg.triplet_file, cfg.n)
        n = cfg.n
    elif cfg.dataset == "distance":
        D = data.load_distance_matrix(cfg.distance_file)
        n = D.shape[0]
        Q = data.triplets_from_distance_matrix(D, total, seed=cfg.data_seed)
    elif cfg.dataset == "classes":
        labels = np.loadtxt(cfg.labels_file, dtype=int, comments="#")
        n = labels.size
        Q = data.class_triplets(labels, total, seed=cfg.data_seed)
    else:  # pragma: no cover - config validation rejects this
        raise ValueError(f"unknown dataset {cfg.dataset!r}")

    test_count = cfg.test_count
    if cfg.dataset == "triplets" and cfg.train_count + test_count > len(Q):
        # file sets are fixed-size; shrink the test side to whatever remains
        test_count = len(Q) - cfg.train_count
    split = data.SplitSpec(
        train_count=cfg.train_count, test_count=test_count, seed=cfg.data_seed
    )
    train, test = data.split_comparisons(Q, split)
    if cfg.noise_rate > 0:
        train = data.inject_noise(train, cfg.noise_rate, seed=cfg.data_seed + 2)
    return train, test, n


def _initial_point(p: int, n: int, seed: int) -> np.ndarray:
    # separate stream from the data generators so the init can never
    # coincide with a synthetic ground-truth cloud drawn from the same seed
    rng = np.random.default_rng((seed, 104729))
    x0 = 0.1 * rng.standard_normal((p, n))
    return x0 - x0.mean(axis=1, keepdims=True)


def run_seed(
    cfg: ExperimentConfig, seed: int, train: ComparisonSet, test: ComparisonSet, n: int
) -> SeedOutcome:
    """One optimizer run; records 3 evaluation checkpoints per epoch."""
    model = make_loss_model(cfg)
    p = cfg.dimension
    rows: list[dict] = []
    t_start = time.perf_counter()

    def record(epoch: int, checkpoint: int, x: np.ndarray, step_size: float, evals: int):
        test_err = (
            evaluate.generalization_error(x, test) if len(test) else float("nan")
        )
        rows.append(
            {
                "seed": seed,
                "epoch": epoch,
                "checkpoint": checkpoint,
                "step_size": step_size,
                "train_loss": oracle.objective(x),
                "test_error": test_err,
                "grad_evals": evals,
                "wall_ms": (time.perf_counter() - t_start) * 1000.0,
            }
        )

    try:
        if cfg.optimizer == "convex":
            per_epoch = 3 if cfg.fair_accounting else max(1, cfg.iterations // cfg.epochs)
            iterations = per_epoch * cfg.epochs

            def cb(it, state, val, evals):
                x = convex.gram_to_embedding(state, p).data
                test_err = (
                    evaluate.generalization_error(x, test) if len(test) else float("nan")
                )
                rows.append(
                    {
                        "seed": seed,
                        "epoch": it // per_epoch,
                        "checkpoint": it % per_epoch + 1,
                        "step_size": cfg.eta,
                        "train_loss": val,
                        "test_error": test_err,
                        "grad_evals": evals,
                        "wall_ms": (time.perf_counter() - t_start) * 1000.0,
                    }
                )

            emb, _ = convex.convex_solve(
                model, train, n=n, p=p, eta=cfg.eta, iterations=iterations,
                seed=seed, callback=cb,
            )
            return SeedOutcome(seed, rows, emb, diverged=False)

        oracle = oracles.ComparisonOracle(model, train, p=p)
        x0 = _initial_point(p, n, seed)
        m = len(train)

        if cfg.optimizer in ("svrg_sbb", "svrg_sbb_modular"):
            sbb = optim.SbbConfig(
                m=m, b=cfg.batch_size, S=cfg.epochs, epsilon=cfg.epsilon,
                eta0=cfg.eta0, seed=seed, fair_accounting=cfg.fair_accounting,
            )
            if cfg.optimizer == "svrg_sbb":
                result = optim.svrg_sbb(oracle, sbb, x0, checkpoint_fn=record)
            else:
                result = optim.svrg_sbb_modular(
                    oracle, sbb, cfg.modules, x0, checkpoint_fn=record
                )
            final = result.x_final
        elif cfg.optimizer == "svrg_fixed":
            result = optim.svrg_fixed(
                oracle, cfg.eta, m, cfg.batch_size, cfg.epochs, seed, x0,
                fair_accounting=cfg.fair_accounting, checkpoint_fn=record,
            )
            final = result.x_final
        elif cfg.optimizer == "sgd":
            schedule = optim.StepSchedule(kind=cfg.schedule, eta=cfg.eta, decay=cfg.decay)
            inner = math.ceil(m / cfg.batch_size) if cfg.fair_accounting else m
            budget = 2 * cfg.batch_size * inner + m  # per-epoch SVRG eval budget
            result = optim.sgd(
                oracle, schedule, cfg.epochs, seed, x0,
                batch_size=cfg.batch_size,
                steps_per_epoch=math.ceil(budget / cfg.batch_size)
                if cfg.fair_accounting
                else None,
                checkpoint_fn=record,
            )
            final = result.x_final
        elif cfg.optimizer == "batch_gd":
            inner = math.ceil(m / cfg.batch_size) if cfg.fair_accounting else m
            per_epoch = max(1, round((2 * cfg.batch_size * inner + m) / m)) if cfg.fair_accounting else 1
            iterations = per_epoch * cfg.epochs if cfg.fair_accounting else cfg.iterations

            def gd_record(it, _ckpt, x, step_size, evals):
                record(it // per_epoch, it % per_epoch + 1, x, step_size, evals)

            result = optim.batch_gd(
                oracle, cfg.eta, iterations, x0, checkpoint_fn=gd_record
            )
            final = result.x_final
        else:  # pragma: no cover - config validation rejects this
            raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
        return SeedOutcome(seed, rows, Embedding(final), diverged=False)
    except optim.DivergenceError as exc:
        logger.warning("seed %d diverged: %s", seed, exc)
        return SeedOutcome(seed, rows, None, diverged=True, error=str(exc))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_trace_csv(path: Path, rows: list[dict]) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r['seed']},{r['epoch']},{r['checkpoint']},"
            f"{r['step_size']:.12g},{r['train_loss']:.12g},{r['test_error']:.12g},"
            f"{r['grad_evals']},{r['wall_ms']:.3f}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def _quantiles(values: list[float]) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    return (
        float(np.quantile(arr, 0.25)),
        float(np.median(arr)),
        float(np.quantile(arr, 0.75)),
    )


def write_summary(path: Path, outcomes: list[SeedOutcome]) -> None:
    """Per-(epoch, checkpoint) median and [0.25, 0.75] band across seeds."""
    grouped: dict[tuple[int, int], list[dict]] = {}
    for out in outcomes:
        for r in out.rows:
            grouped.setdefault((r["epoch"], r["checkpoint"]), []).append(r)
    lines = [
        "epoch,checkpoint,grad_evals_median,test_error_q25,test_error_median,"
        "test_error_q75,train_loss_median,step_size_median"
    ]
    for (epoch, ckpt) in sorted(grouped):
        rows = grouped[(epoch, ckpt)]
        q25, med, q75 = _quantiles([r["test_error"] for r in rows])
        lines.append(
            f"{epoch},{ckpt},{np.median([r['grad_evals'] for r in rows]):.12g},"
            f"{q25:.12g},{med:.12g},{q75:.12g},"
            f"{np.median([r['train_loss'] for r in rows]):.12g},"
            f"{np.median([r['step_size'] for r in rows]):.12g}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def evals_to_threshold(rows: list[dict], threshold: float) -> tuple[float, float]:
    """(grad_evals, wall_ms) at the first checkpoint with test_error <= threshold;
    (inf, inf) when the run never gets there."""
    for r in rows:
        if r["test_error"] <= threshold:
            return float(r["grad_evals"]), float(r["wall_ms"])
    return math.inf, math.inf


def write_threshold_table(
    path: Path, outcomes: list[SeedOutcome], threshold: float
) -> dict:
    evals = []
    walls = []
    reached = 0
    for out in outcomes:
        e, w = evals_to_threshold(out.rows, threshold)
        evals.append(e)
        walls.append(w)
        if math.isfinite(e):
            reached += 1
    med_evals = float(np.median(evals)) if evals else math.inf
    med_wall = float(np.median(walls)) if walls else math.inf
    # Runs that never reach the threshold are reported with the "-" marker.
    table = {
        "threshold": threshold,
        "seeds": len(outcomes),
        "seeds_reached": reached,
        "median_evals_to_threshold": "-" if not math.isfinite(med_evals) else med_evals,
        "median_wall_ms_to_threshold": "-" if not math.isfinite(med_wall) else med_wall,
    }
    lines = ["metric,value"] + [f"{k},{v}" for k, v in table.items()]
    _atomic_write(path, "\n".join(lines) + "\n")
    return table


def write_plots(out_dir: Path, outcomes: list[SeedOutcome], cfg: ExperimentConfig) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    provenance = {"Description": json.dumps({"config": resolved_items(cfg)})}
    grouped: dict[tuple[int, int], list[dict]] = {}
    for out in outcomes:
        for r in out.rows:
            grouped.setdefault((r["epoch"], r["checkpoint"]), []).append(r)
    keys = sorted(grouped)
    if not keys:
        return
    m = max(cfg.train_count, 1)
    xs = [np.median([r["grad_evals"] for r in grouped[k]]) / m for k in keys]
    med = [np.median([r["test_error"] for r in grouped[k]]) for k in keys]
    q25 = [np.quantile([r["test_error"] for r in grouped[k]], 0.25) for k in keys]
    q75 = [np.quantile([r["test_error"] for r in grouped[k]], 0.75) for k in keys]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, med, label=cfg.optimizer)
    ax.fill_between(xs, q25, q75, alpha=0.25)
    ax.set_xlabel("gradient evaluations / |train|")
    ax.set_ylabel("test error")
    ax.legend()
    fig.savefig(out_dir / "test_error.svg", metadata=provenance)
    plt.close(fig)

    epochs = sorted({k[0] for k in keys})
    steps = [
        np.median([r["step_size"] for k in keys if k[0] == e for r in grouped[k]])
        for e in epochs
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, steps)
    ax.set_xlabel("epoch")
    ax.set_ylabel("step size")
    fig.savefig(out_dir / "step_size.svg", metadata=provenance)
    plt.close(fig)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> int:
    """Run all seeds; returns 0 on success, 3 when every seed diverged."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test, n = build_dataset(cfg)
    outcomes = []
    for seed in cfg.seeds:
        outcome = run_seed(cfg, seed, train, test, n)
        outcomes.append(outcome)
        write_trace_csv(out / f"trace_seed{seed}.csv", outcome.rows)
    write_summary(out / "summary.csv", outcomes)
    table = write_threshold_table(out / "threshold.csv", outcomes, cfg.threshold)
    manifest = {
        "version": __version__,
        "config": resolved_items(cfg),
        "train_size": len(train),
        "test_size": len(test),
        "n": n,
        "threshold_table": table,
        "diverged_seeds": [o.seed for o in outcomes if o.diverged],
        "final_test_error": {
            str(o.seed): o.final_test_error for o in outcomes if o.rows
        },
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    if cfg.plots:
        write_plots(out, outcomes, cfg)
    if all(o.diverged for o in outcomes):
        return 3
    return 0


def save_embedding_csv(path: Path, emb: Embedding) -> None:
    """p rows of n comma-separated coordinates."""
    lines = [",".join(f"{v:.12g}" for v in row) for row in emb.data]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
