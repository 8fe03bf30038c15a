"""Maximum-likelihood training loop shared by the MAF and CNF models."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .ad import Adam, no_grad
from .cnf import CnfModel, cnf_log_prob
from .errors import ContractError, DivergenceError, NumericalError
from .maf import MafStack, maf_log_prob

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    learning_rate: float = 0.01
    weight_decay: float = 0.001
    val_fraction: float = 0.1
    seed: int = 0
    restore_best: bool = True


@dataclass
class TrainReport:
    """Per-epoch mean negative log-likelihood (total over timepoints, not per dim).

    Entry 0 is the untrained model; entry ``e`` follows epoch ``e``.
    """

    dim: int
    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    seconds: float = 0.0
    best_epoch: int = 0

    @property
    def final_val_nll_per_dim(self) -> float:
        return self.val_nll[-1] / self.dim

    def to_rows(self) -> list[dict]:
        return [{"epoch": e, "train_nll": tr, "val_nll": va,
                 "train_nll_per_dim": tr / self.dim, "val_nll_per_dim": va / self.dim}
                for e, (tr, va) in enumerate(zip(self.train_nll, self.val_nll))]

    def to_dict(self) -> dict:
        return asdict(self)


def log_prob_fn(model):
    if isinstance(model, MafStack):
        return lambda x: maf_log_prob(model, x)
    if isinstance(model, CnfModel):
        return lambda x: cnf_log_prob(model, x)
    raise ContractError(f"cannot train {type(model).__name__}")


def split_validation(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * fraction)) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _mean_nll(lp_fn, x: np.ndarray, batch_size: int) -> float:
    if len(x) == 0:
        return float("nan")
    with no_grad():
        total = 0.0
        for i in range(0, len(x), batch_size):
            total -= float(lp_fn(x[i:i + batch_size]).data.sum())
    return total / len(x)


def train(model, data, config: TrainConfig) -> TrainReport:
    """Minimise mean NLL with Adam; deterministic for a fixed ``config.seed``."""
    x = np.asarray(getattr(data, "data", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ContractError(f"training data must be [n, {model.input_dim}], got {x.shape}")
    lp_fn = log_prob_fn(model)
    train_idx, val_idx = split_validation(len(x), config.val_fraction, config.seed)
    x_train, x_val = x[train_idx], x[val_idx]
    params = model.parameters()
    opt = Adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed + 1)
    report = TrainReport(dim=model.input_dim)
    start = time.perf_counter()
    report.train_nll.append(_mean_nll(lp_fn, x_train, config.batch_size))
    report.val_nll.append(_mean_nll(lp_fn, x_val, config.batch_size))
    best = [p.data.copy() for p in params]
    best_val = report.val_nll[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        losses, sizes = [], []
        for b, i in enumerate(range(0, len(order), config.batch_size)):
            batch = x_train[order[i:i + config.batch_size]]
            try:
                loss = -lp_fn(batch).mean()
            except NumericalError as exc:
                raise DivergenceError(f"training diverged at epoch {epoch}, batch {b}: {exc}",
                                      epoch=epoch, batch=b) from exc
            if not np.isfinite(loss.data):
                raise DivergenceError(f"non-finite NLL at epoch {epoch}, batch {b}",
                                      epoch=epoch, batch=b)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            sizes.append(len(batch))
        report.train_nll.append(float(np.average(losses, weights=sizes)))
        report.val_nll.append(_mean_nll(lp_fn, x_val, config.batch_size))
        log.info("epoch %d train %.4f val %.4f", epoch, report.train_nll[-1], report.val_nll[-1])
        if config.restore_best and report.val_nll[-1] < best_val:
            best_val = report.val_nll[-1]
            best = [p.data.copy() for p in params]
            report.best_epoch = epoch
    if config.restore_best and len(x_val):
        for p, b in zip(params, best):
            p.data[...] = b
    else:
        report.best_epoch = config.epochs
    report.seconds = time.perf_counter() - start
    return report


train_maf = train
train_cnf = train
