"""Flat key-value experiment configuration.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are hard errors; all validation problems are reported at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    """Raised with every validation problem collected into one message."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


_DATASETS = ("synthetic", "triplets", "distance", "classes")
_OPTIMIZERS = ("svrg_sbb", "svrg_sbb_modular", "svrg_fixed", "sgd", "batch_gd", "convex")
_LOSSES = ("gnmds", "ckl", "ste", "tste")
_SCHEDULES = ("constant", "inv_t")


@dataclass
class ExperimentConfig:
    # dataset
    dataset: str = "synthetic"
    n: int = 100
    p: int = 10
    variance: float = 0.05
    data_seed: int = 0
    triplet_file: str | None = None
    distance_file: str | None = None
    labels_file: str | None = None
    train_count: int = 10000
    test_count: int = 10000
    noise_rate: float = 0.0
    # loss
    loss: str = "ste"
    alpha: float | None = None
    # optimizer
    optimizer: str = "svrg_sbb"
    epochs: int = 10
    batch_size: int = 1
    epsilon: float | None = None  # None = estimate from first gradient pair
    eta0: float = 1e-2
    eta: float = 0.1
    modules: int = 5
    fair_accounting: bool = True
    schedule: str = "constant"
    decay: float = 0.0
    iterations: int = 500
    embed_dim: int | None = None
    # harness
    seeds: tuple[int, ...] = (0,)
    threshold: float = 0.15
    output_dir: str = "runs/out"
    plots: bool = False

    @property
    def dimension(self) -> int:
        return self.embed_dim if self.embed_dim is not None else self.p


_FIELD_TYPES = {
    "dataset": str,
    "n": int,
    "p": int,
    "variance": float,
    "data_seed": int,
    "triplet_file": str,
    "distance_file": str,
    "labels_file": str,
    "train_count": int,
    "test_count": int,
    "noise_rate": float,
    "loss": str,
    "alpha": float,
    "optimizer": str,
    "epochs": int,
    "batch_size": int,
    "epsilon": float,
    "eta0": float,
    "eta": float,
    "modules": int,
    "fair_accounting": bool,
    "schedule": str,
    "decay": float,
    "iterations": int,
    "embed_dim": int,
    "seeds": tuple,
    "threshold": float,
    "output_dir": str,
    "plots": bool,
}


def _coerce(key: str, raw: str, problems: list[str]):
    kind = _FIELD_TYPES[key]
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            if key == "epsilon" and raw.lower() == "auto":
                return None
            return float(raw)
        if kind is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        problems.append(f"{key}: cannot parse {raw!r} as {kind.__name__}")
        return None


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    problems: list[str] = []
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected `key = value`, got {line!r}")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        values[key] = _coerce(key, raw, problems)

    cfg = ExperimentConfig()
    for key, val in values.items():
        if val is not None or key in ("epsilon",):
            setattr(cfg, key, val)

    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config file {p}: {exc}"]) from exc
    return parse_config_text(text, source=str(p))


def _validate(cfg: ExperimentConfig, problems: list[str]) -> None:
    if cfg.dataset not in _DATASETS:
        problems.append(f"dataset must be one of {_DATASETS}, got {cfg.dataset!r}")
    if cfg.optimizer not in _OPTIMIZERS:
        problems.append(f"optimizer must be one of {_OPTIMIZERS}, got {cfg.optimizer!r}")
    if cfg.loss not in _LOSSES:
        problems.append(f"loss must be one of {_LOSSES}, got {cfg.loss!r}")
    if cfg.schedule not in _SCHEDULES:
        problems.append(f"schedule must be one of {_SCHEDULES}, got {cfg.schedule!r}")
    if cfg.dataset == "triplets" and not cfg.triplet_file:
        problems.append("dataset=triplets requires triplet_file")
    if cfg.dataset == "distance" and not cfg.distance_file:
        problems.append("dataset=distance requires distance_file")
    if cfg.dataset == "classes" and not cfg.labels_file:
        problems.append("dataset=classes requires labels_file")
    sources = [cfg.triplet_file, cfg.distance_file, cfg.labels_file]
    if sum(s is not None for s in sources) > 1:
        problems.append("at most one of triplet_file/distance_file/labels_file may be set")
    if cfg.n < 2:
        problems.append(f"n must be >= 2, got {cfg.n}")
    if cfg.p < 1:
        problems.append(f"p must be >= 1, got {cfg.p}")
    if cfg.embed_dim is not None and cfg.embed_dim < 1:
        problems.append(f"embed_dim must be >= 1, got {cfg.embed_dim}")
    if not cfg.variance > 0:
        problems.append(f"variance must be > 0, got {cfg.variance}")
    if cfg.train_count < 1 or cfg.test_count < 0:
        problems.append("train_count must be >= 1 and test_count >= 0")
    if not (0.0 <= cfg.noise_rate < 1.0):
        problems.append(f"noise_rate must be in [0, 1), got {cfg.noise_rate}")
    if cfg.alpha is not None and not cfg.alpha > 0:
        problems.append(f"alpha must be > 0, got {cfg.alpha}")
    if cfg.epochs < 1 or cfg.iterations < 1 or cfg.modules < 1:
        problems.append("epochs, iterations and modules must be >= 1")
    if cfg.batch_size < 1:
        problems.append(f"batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.epsilon is not None and cfg.epsilon < 0:
        problems.append(f"epsilon must be >= 0, got {cfg.epsilon}")
    if not cfg.eta0 > 0 or not cfg.eta > 0:
        problems.append("eta0 and eta must be > 0")
    if cfg.decay < 0:
        problems.append(f"decay must be >= 0, got {cfg.decay}")
    if not cfg.seeds:
        problems.append("seeds must list at least one seed")
    if not (0.0 < cfg.threshold < 1.0):
        problems.append(f"threshold must be in (0, 1), got {cfg.threshold}")


def resolved_items(cfg: ExperimentConfig) -> dict:
    """Full config as plain JSON-serializable dict for manifests."""
    out = {}
    for key in _FIELD_TYPES:
        val = getattr(cfg, key)
        if isinstance(val, tuple):
            val = list(val)
        out[key] = val
    return out
