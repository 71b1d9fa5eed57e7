"""Ordinal embedding from relative similarity comparisons.

Learns low-dimensional point configurations from statements of the form
"i is closer to j than l is to k", using variance-reduced stochastic
gradient descent with a stabilized Barzilai-Borwein step size, plus a
convex Gram-matrix baseline and a reproducible experiment harness.
"""

from .core import Comparison, ComparisonSet, Embedding, center, comparison_margin
from .losses import LossKind, LossModel
from .optim import (
    DivergenceError,
    RunResult,
    SbbConfig,
    StepSchedule,
    batch_gd,
    bb_step_raw,
    sbb_step,
    sgd,
    svrg_fixed,
    svrg_sbb,
    svrg_sbb_modular,
)
from .convex import classical_mds, convex_solve, gram_to_embedding, project_psd_centered
from .data import (
    SplitSpec,
    SyntheticSpec,
    gen_synthetic,
    inject_noise,
    load_quadruplets,
    load_triplets,
    sample_triplets,
    save_comparisons,
    split_comparisons,
    triplets_from_distance_matrix,
)
from .evaluate import generalization_error, procrustes_align, retrieval_metrics

__version__ = "0.1.0"

__all__ = [
    "Comparison",
    "ComparisonSet",
    "Embedding",
    "center",
    "comparison_margin",
    "LossKind",
    "LossModel",
    "DivergenceError",
    "RunResult",
    "SbbConfig",
    "StepSchedule",
    "batch_gd",
    "bb_step_raw",
    "sbb_step",
    "sgd",
    "svrg_fixed",
    "svrg_sbb",
    "svrg_sbb_modular",
    "classical_mds",
    "convex_solve",
    "gram_to_embedding",
    "project_psd_centered",
    "SplitSpec",
    "SyntheticSpec",
    "gen_synthetic",
    "inject_noise",
    "load_quadruplets",
    "load_triplets",
    "sample_triplets",
    "save_comparisons",
    "split_comparisons",
    "triplets_from_distance_matrix",
    "generalization_error",
    "procrustes_align",
    "retrieval_metrics",
    "__version__",
]
