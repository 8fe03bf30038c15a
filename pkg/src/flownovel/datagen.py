"""Synthetic time series, CSV ingestion and the preprocessing pipeline."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, DecompositionError

STATES = ("raw", "subsampled", "windowed", "standardized")


@dataclass
class AutocorrSpec:
    tau: float
    period_divisor: float = 15.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError("tau must be positive")

    def __call__(self, lag):
        lag = np.abs(np.asarray(lag, dtype=np.float64))
        return np.exp(-lag / self.tau) * np.cos(lag / self.period_divisor)


@dataclass
class TimeSeriesBatch:
    data: np.ndarray
    label: str = "unknown"
    tau: float | None = None
    state: str = "raw"
    normalizer: dict | None = None
    name: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ContractError(f"batch data must be 2-d, got shape {self.data.shape}")
        if self.label not in ("normal", "abnormal", "unknown"):
            raise ContractError(f"bad label {self.label!r}")
        if self.state not in STATES:
            raise ContractError(f"bad preprocessing state {self.state!r}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    def with_data(self, data, **kw) -> "TimeSeriesBatch":
        return replace(self, data=data, **kw)


@dataclass
class PreprocessConfig:
    train_fraction: float = 0.8
    stride: int = 10
    window: int = 100
    seed: int = 0


# -- synthetic generation -------------------------------------------------
def build_covariance(spec: AutocorrSpec, T: int) -> np.ndarray:
    if T < 1:
        raise ContractError("T must be >= 1")
    idx = np.arange(T)
    return spec(idx[:, None] - idx[None, :])


def cholesky(S: np.ndarray, jitter_start: float = 1e-10, jitter_max: float = 1e-6) -> np.ndarray:
    """Lower-triangular factor with escalating diagonal jitter for near-singular input."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError("cholesky needs a square matrix")
    if not np.allclose(S, S.T):
        raise ContractError("cholesky needs a symmetric matrix")
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(S + jitter * np.eye(len(S)))
        except np.linalg.LinAlgError:
            jitter = jitter_start if jitter == 0.0 else jitter * 10
            if jitter > jitter_max * (1 + 1e-9):
                raise DecompositionError("matrix is not positive definite within jitter budget")


def generate_synthetic(spec: AutocorrSpec, T: int, n: int, seed: int,
                       label: str = "normal") -> TimeSeriesBatch:
    """Rows ``y @ B.T`` with white-noise ``y`` so that ``cov(row) = B B^T = Sigma``."""
    if n < 1:
        raise ContractError("n must be >= 1")
    B = cholesky(build_covariance(spec, T))
    y = np.random.default_rng(seed).standard_normal((n, T))
    return TimeSeriesBatch(y @ B.T, label=label, tau=spec.tau, name=f"{label}_tau{spec.tau:g}")


def renormalize_abnormal(abnormal: TimeSeriesBatch, normal: TimeSeriesBatch,
                         mode: str = "std") -> TimeSeriesBatch:
    """Match abnormal per-timestep spread to the normal batch.

    ``mode="std"`` rescales by the ratio of standard deviations, which
    equalises variances. ``mode="variance"`` divides and multiplies by the
    variances themselves.
    """
    if abnormal.T != normal.T:
        raise ContractError("batches must share T")
    if mode == "std":
        s_ab, s_n = abnormal.data.std(axis=0), normal.data.std(axis=0)
    elif mode == "variance":
        s_ab, s_n = abnormal.data.var(axis=0), normal.data.var(axis=0)
    else:
        raise ContractError(f"unknown renormalization mode {mode!r}")
    if np.any(s_ab == 0) or np.any(s_n == 0):
        raise DataError("zero inter-sample variance at some timestep")
    return abnormal.with_data(abnormal.data / s_ab * s_n)


# -- CSV ------------------------------------------------------------------
def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _label_from_name(name: str) -> str:
    lower = name.lower()
    if "abnormal" in lower or "anomal" in lower:
        return "abnormal"
    if "normal" in lower:
        return "normal"
    return "unknown"


def load_csv(path) -> TimeSeriesBatch:
    """Read one sample per row. A non-numeric first row is taken as a header."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    first = 0
    if not all(numeric(c) for c in rows[0]):
        first = 1
    if len(rows) <= first:
        raise DataError(f"{path}: no data rows")
    width = len(rows[first])
    values = np.empty((len(rows) - first, width))
    for i, row in enumerate(rows[first:], start=first + 1):
        if len(row) != width:
            raise DataError(f"{path}: line {i} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell at line {i}, column {j + 1}: {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite value at line {i}, column {j + 1}: {cell!r}")
            values[i - first - 1, j] = v

    meta = {}
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
    label = meta.get("label") or _label_from_name(path.stem)
    normalizer = meta.get("normalizer")
    if normalizer is not None:
        normalizer = {k: np.asarray(v, dtype=np.float64) for k, v in normalizer.items()}
    return TimeSeriesBatch(values, label=label, tau=meta.get("tau"),
                           state=meta.get("state", "raw"), normalizer=normalizer, name=path.stem)


def save_csv(batch: TimeSeriesBatch, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, batch.data, delimiter=",", fmt="%.17g")
    meta = {"label": batch.label, "tau": batch.tau, "state": batch.state}
    if batch.normalizer is not None:
        meta["normalizer"] = {k: np.asarray(v).tolist() for k, v in batch.normalizer.items()}
    _sidecar(path).write_text(json.dumps(meta, indent=1) + "\n")
    return path


# -- preprocessing ----------------------------------------------------------
def split_normal(batch: TimeSeriesBatch, train_fraction: float, seed: int):
    perm = np.random.default_rng(seed).permutation(batch.n)
    n_train = int(round(train_fraction * batch.n))
    train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return train_idx, test_idx


def subsample(batch: TimeSeriesBatch, stride: int) -> TimeSeriesBatch:
    if batch.state != "raw":
        raise ContractError(f"subsample expects a raw batch, got {batch.state}")
    return batch.with_data(batch.data[:, ::stride].copy(), state="subsampled")


def window_middle(batch: TimeSeriesBatch, width: int) -> TimeSeriesBatch:
    if batch.state != "subsampled":
        raise ContractError(f"window expects a subsampled batch, got {batch.state}")
    if batch.T < width:
        raise ContractError(f"series of length {batch.T} is shorter than the {width}-point window")
    start = (batch.T - width) // 2
    return batch.with_data(batch.data[:, start:start + width].copy(), state="windowed")


def fit_normalizer(batch: TimeSeriesBatch) -> dict:
    std = batch.data.std(axis=0)
    if np.any(std == 0):
        raise DataError("zero training variance at some timestep")
    return {"mean": batch.data.mean(axis=0), "std": std}


def standardize(batch: TimeSeriesBatch, normalizer: dict) -> TimeSeriesBatch:
    if batch.state == "standardized":
        raise ContractError("batch is already standardized")
    mean, std = np.asarray(normalizer["mean"]), np.asarray(normalizer["std"])
    if mean.shape != (batch.T,):
        raise ContractError(f"normalizer length {mean.shape} does not match T={batch.T}")
    return batch.with_data((batch.data - mean) / std, state="standardized",
                           normalizer={"mean": mean, "std": std})


@dataclass
class Preprocessed:
    train: TimeSeriesBatch
    test: TimeSeriesBatch
    others: list[TimeSeriesBatch] = field(default_factory=list)
    normalizer: dict = field(default_factory=dict)
    train_index: np.ndarray | None = None
    test_index: np.ndarray | None = None


def preprocess(normal: TimeSeriesBatch, others: list[TimeSeriesBatch],
               cfg: PreprocessConfig | None = None) -> Preprocessed:
    """Split, subsample, window, then standardize everything with training stats."""
    cfg = cfg or PreprocessConfig()
    for b in [normal, *others]:
        if b.T != normal.T:
            raise ContractError("all raw batches must share T")
    train_idx, test_idx = split_normal(normal, cfg.train_fraction, cfg.seed)
    train = normal.with_data(normal.data[train_idx], name="train")
    test = normal.with_data(normal.data[test_idx], name="test_normal")

    def pipe(b: TimeSeriesBatch) -> TimeSeriesBatch:
        return window_middle(subsample(b, cfg.stride), cfg.window)

    train_w = pipe(train)
    norm = fit_normalizer(train_w)
    return Preprocessed(
        train=standardize(train_w, norm),
        test=standardize(pipe(test), norm),
        others=[standardize(pipe(b), norm) for b in others],
        normalizer=norm,
        train_index=train_idx,
        test_index=test_idx,
    )
