"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric divergence in every
seed, 4 I/O error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, data, evaluate, optim, oracles
from .config import ConfigError, ExperimentConfig, parse_config, resolved_items
from .core import ComparisonSet
from .experiment import (
    build_dataset,
    make_loss_model,
    run_experiment,
    run_seed,
    save_embedding_csv,
    _atomic_write,
)
from .gradcheck import check_gradients
from .losses import LossKind, LossModel

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Ordinal embedding from relative similarity comparisons."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--output", "-o", type=click.Path(), default=None,
              help="Override the config's output directory.")
def run(config_path: str, output: str | None):
    """Run the experiment described by CONFIG_PATH."""
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    try:
        code = run_experiment(cfg, output)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    if code == 3:
        click.echo("every seed diverged", err=True)
    sys.exit(code)


@main.command()
@click.argument("triplet_file", type=click.Path())
@click.option("--n", type=int, required=True, help="Number of objects.")
@click.option("--p", type=int, default=2, show_default=True, help="Embedding dimension.")
@click.option("--loss", "loss_name", type=click.Choice(["gnmds", "ckl", "ste", "tste"]),
              default="ste", show_default=True)
@click.option("--alpha", type=float, default=None, help="Student-t degrees of freedom.")
@click.option("--optimizer", type=click.Choice(["svrg_sbb", "svrg_fixed", "sgd", "batch_gd", "convex"]),
              default="svrg_sbb", show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--batch-size", type=int, default=10, show_default=True)
@click.option("--epsilon", type=float, default=None, help="SBB stabilizer (default: auto).")
@click.option("--eta", type=float, default=0.1, show_default=True)
@click.option("--eta0", type=float, default=1e-2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--holdout", type=float, default=0.1, show_default=True,
              help="Fraction of comparisons held out to report agreement.")
@click.option("--output", "-o", type=click.Path(), default="embedding.csv", show_default=True)
def embed(triplet_file, n, p, loss_name, alpha, optimizer, epochs, batch_size,
          epsilon, eta, eta0, seed, holdout, output):
    """Fit one embedding from a comparison CSV and write it with a manifest."""
    try:
        Q = data.load_quadruplets(triplet_file, n)
    except (OSError,) as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except (ValueError, IndexError) as exc:
        click.echo(f"invalid comparison file: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    cfg = ExperimentConfig(
        dataset="triplets", triplet_file=str(triplet_file), n=n, p=p, embed_dim=p,
        loss=loss_name, alpha=alpha, optimizer=optimizer, epochs=epochs,
        batch_size=batch_size, epsilon=epsilon, eta=eta, eta0=eta0,
        seeds=(seed,), data_seed=seed,
    )
    test_count = max(1, int(holdout * len(Q)))
    train_count = len(Q) - test_count
    if train_count < 1:
        click.echo("not enough comparisons to fit", err=True)
        sys.exit(EXIT_CONFIG)
    cfg.train_count, cfg.test_count = train_count, test_count
    train, test = data.split_comparisons(
        Q, data.SplitSpec(train_count=train_count, test_count=test_count, seed=seed)
    )
    outcome = run_seed(cfg, seed, train, test, n)
    if outcome.diverged or outcome.embedding is None:
        click.echo(f"optimizer diverged: {outcome.error}", err=True)
        sys.exit(EXIT_DIVERGED)
    try:
        save_embedding_csv(Path(output), outcome.embedding)
        err = evaluate.generalization_error(outcome.embedding, test)
        manifest = {
            "version": __version__,
            "config": resolved_items(cfg),
            "seed": seed,
            "holdout_error": err,
            "holdout_agreement": 1.0 - err,
            "train_size": len(train),
            "test_size": len(test),
            "embedding_file": str(output),
        }
        _atomic_write(Path(output).with_suffix(".manifest.json"),
                      json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"wrote {output}; held-out agreement {1.0 - err:.4f}")
    sys.exit(EXIT_OK)


@main.command("check-gradients")
@click.option("--loss", "loss_name",
              type=click.Choice(["gnmds", "ckl", "ste", "tste", "all"]),
              default="all", show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--tolerance", type=float, default=1e-6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def check_gradients_cmd(loss_name, trials, tolerance, seed):
    """Compare analytic loss gradients against central finite differences."""
    kinds = (
        list(LossKind) if loss_name == "all" else [LossKind[loss_name.upper()]]
    )
    ok = True
    for kind in kinds:
        model = LossModel(kind, alpha=2.0) if kind is LossKind.TSTE else LossModel(kind)
        report = check_gradients(model, trials=trials, tolerance=tolerance, seed=seed)
        click.echo(report.summary())
        ok = ok and report.passed
    sys.exit(EXIT_OK if ok else 1)


@main.group()
def triplets():
    """Generate, perturb and split comparison files."""


@triplets.command("gen")
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--p", type=int, default=10, show_default=True)
@click.option("--variance", type=float, default=0.05, show_default=True)
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--distance-file", type=click.Path(), default=None,
              help="Label triplets from this distance matrix instead of a synthetic cloud.")
@click.option("--output", "-o", type=click.Path(), required=True)
def triplets_gen(n, p, variance, count, seed, distance_file, output):
    """Sample distance-labeled triplets without replacement."""
    try:
        if distance_file is not None:
            D = data.load_distance_matrix(distance_file)
            Q = data.triplets_from_distance_matrix(D, count, seed=seed)
        else:
            X = data.gen_synthetic(data.SyntheticSpec(n=n, p=p, variance=variance, seed=seed))
            Q = data.sample_triplets(X, count, seed=seed + 1)
        data.save_comparisons(output, Q)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except ValueError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"wrote {len(Q)} comparisons to {output}")


@triplets.command("noise")
@click.argument("triplet_file", type=click.Path())
@click.option("--n", type=int, required=True)
@click.option("--rate", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", "-o", type=click.Path(), required=True)
def triplets_noise(triplet_file, n, rate, seed, output):
    """Swap the asserted ordering in a fixed fraction of comparisons."""
    try:
        Q = data.load_quadruplets(triplet_file, n)
        noisy = data.inject_noise(Q, rate, seed)
        data.save_comparisons(output, noisy)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except (ValueError, IndexError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"wrote {len(noisy)} comparisons to {output}")


@triplets.command("split")
@click.argument("triplet_file", type=click.Path())
@click.option("--n", type=int, required=True)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-output", type=click.Path(), required=True)
@click.option("--test-output", type=click.Path(), required=True)
def triplets_split(triplet_file, n, train_fraction, seed, train_output, test_output):
    """Shuffle and split a comparison file into disjoint train/test files."""
    try:
        Q = data.load_quadruplets(triplet_file, n)
        train, test = data.split_comparisons(
            Q, data.SplitSpec(train_fraction=train_fraction, seed=seed)
        )
        data.save_comparisons(train_output, train)
        data.save_comparisons(test_output, test)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except (ValueError, IndexError) as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"wrote {len(train)} train / {len(test)} test comparisons")


if __name__ == "__main__":
    main()
