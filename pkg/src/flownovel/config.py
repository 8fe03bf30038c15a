"""Experiment configuration; defaults follow the published hyperparameters."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ContractError

MODELS = ("maf", "cnf", "lof")


@dataclass
class ExperimentConfig:
    model: str = "maf"
    out_dir: str = "runs/default"
    seed: int = 0

    # data
    tau_normal: float = 50.0
    tau_abnormal: list[float] = field(default_factory=lambda: [50.0, 40.0, 30.0, 20.0])
    T: int = 1000
    n: int = 1000
    n_abnormal: int = 1000
    renorm_mode: str = "std"
    csv_normal: str | None = None
    csv_abnormal: list[str] = field(default_factory=list)

    # preprocessing
    train_fraction: float = 0.8
    stride: int = 10
    window: int = 100

    # MAF
    maf_layers: int = 5
    maf_hidden: list[int] = field(default_factory=lambda: [256, 256, 256])
    maf_flip: bool = True
    maf_log_scale_bound: float | None = 3.0
    maf_epochs: int = 100

    # CNF
    cnf_hidden: list[int] = field(default_factory=lambda: [256, 256])
    cnf_diagonal: bool = True
    cnf_epochs: int = 140
    solver_method: str = "rk4_fixed"
    solver_steps: int = 40
    rtol: float = 1e-5
    atol: float = 1e-5
    max_steps: int = 10000

    # shared MADE options
    made_skip: bool = True

    # training
    learning_rate: float = 0.01
    weight_decay: float = 0.001
    batch_size: int = 100
    val_fraction: float = 0.1
    restore_best: bool = True

    # LOF
    min_pts: int = 50
    metric: str = "chebyshev"

    # evaluation / sampling
    target_fpr: float = 0.05
    hist_bins: int = 30
    n_samples: int = 1000

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ContractError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.tau_normal <= 0 or any(t <= 0 for t in self.tau_abnormal):
            raise ContractError("decay times must be positive")
        if min(self.T, self.n, self.n_abnormal, self.stride, self.window, self.batch_size) < 1:
            raise ContractError("sizes must be positive")
        if not 0 < self.train_fraction < 1:
            raise ContractError("train_fraction must lie in (0, 1)")
        if self.metric not in ("chebyshev", "euclidean"):
            raise ContractError(f"unknown metric {self.metric!r}")
        return self

    def epochs_for(self, model: str) -> int:
        return {"maf": self.maf_epochs, "cnf": self.cnf_epochs}.get(model, 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ContractError(f"cannot read config {path}: {exc}") from exc


def resolve(config_path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Config file, then FLOWNOVEL_SEED, then explicit overrides (highest priority)."""
    cfg = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
    d = cfg.to_dict()
    env_seed = os.environ.get("FLOWNOVEL_SEED")
    if env_seed is not None:
        try:
            d["seed"] = int(env_seed)
        except ValueError:
            raise ContractError(f"FLOWNOVEL_SEED must be an integer, got {env_seed!r}") from None
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(d)
