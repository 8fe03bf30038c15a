"""Novelty scores, ROC curves, decision boundaries and autocorrelation.

All scores are oriented so that larger means more anomalous: flows report the
negative mean log-likelihood per timepoint, LOF its raw factor. Divergent
flow samples score ``+inf``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ad import no_grad
from .cnf import CnfModel, cnf_log_prob
from .datagen import TimeSeriesBatch
from .errors import ContractError, DataError
from .lof import LofModel, lof_score
from .maf import MafStack, maf_log_prob


@dataclass
class ScoreSet:
    scores: np.ndarray
    labels: np.ndarray  # "normal" / "abnormal"
    source_model: str = ""
    divergent: np.ndarray | None = None
    log_prob: np.ndarray | None = None  # total log-likelihood for flows

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=object)
        if self.divergent is None:
            self.divergent = np.zeros(len(self.scores), dtype=bool)
        if not (len(self.scores) == len(self.labels) == len(self.divergent)):
            raise ContractError("scores, labels and flags must have equal length")

    @property
    def is_abnormal(self) -> np.ndarray:
        return self.labels == "abnormal"

    def __add__(self, other: "ScoreSet") -> "ScoreSet":
        return ScoreSet(
            np.concatenate([self.scores, other.scores]),
            np.concatenate([self.labels, other.labels]),
            self.source_model or other.source_model,
            np.concatenate([self.divergent, other.divergent]),
            None if self.log_prob is None or other.log_prob is None
            else np.concatenate([self.log_prob, other.log_prob]),
        )


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # point i flags scores >= thresholds[i]; +inf row flags nothing
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass
class Boundary:
    threshold: float  # score > threshold is classified abnormal
    fpr: float
    tpr: float
    target_fpr: float


def _normalizers_match(a: dict | None, b: dict | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return all(np.allclose(np.asarray(a[k]), np.asarray(b[k]), rtol=1e-12, atol=1e-12)
               for k in ("mean", "std"))


def model_name(model) -> str:
    return {MafStack: "maf", CnfModel: "cnf", LofModel: "lof"}.get(type(model), type(model).__name__)


def flow_log_prob(model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total log-likelihood per row plus divergence flags (MAF never diverges)."""
    with no_grad():
        if isinstance(model, MafStack):
            return maf_log_prob(model, x).data.copy(), np.zeros(len(x), dtype=bool)
        if isinstance(model, CnfModel):
            return cnf_log_prob(model, x, with_flags=True)
    raise ContractError(f"{type(model).__name__} is not a flow")


def score_batch(model, batch: TimeSeriesBatch, check_normalizer: bool = True) -> ScoreSet:
    if check_normalizer and not _normalizers_match(getattr(model, "normalizer", None), batch.normalizer):
        raise ContractError("batch was not standardized with the model's normalizer")
    x = batch.data
    labels = np.full(len(x), "abnormal" if batch.label == "abnormal" else "normal", dtype=object)
    name = model_name(model)
    if isinstance(model, LofModel):
        return ScoreSet(lof_score(model, x), labels, name)
    lp, div = flow_log_prob(model, x)
    scores = -lp / x.shape[1]
    scores[div] = np.inf
    return ScoreSet(scores, labels, name, div, lp)


def roc(scores: ScoreSet) -> RocCurve:
    """Threshold sweep over unique scores; tied scores move in one step."""
    pos = scores.is_abnormal
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("ROC needs both normal and abnormal samples")
    s = scores.scores
    order = np.argsort(-s, kind="stable")
    s_sorted, pos_sorted = s[order], pos[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(s_sorted[1:] != s_sorted[:-1])[0], len(s_sorted) - 1]
    tps = np.cumsum(pos_sorted)[ends]
    fps = np.cumsum(~pos_sorted)[ends]
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s_sorted[ends]]
    return RocCurve(fpr, tpr, thresholds, float(np.trapezoid(tpr, fpr)))


def auc(scores: ScoreSet) -> float:
    return roc(scores).auc


def _rates(scores: ScoreSet, threshold: float) -> tuple[float, float]:
    flagged = scores.scores > threshold
    pos = scores.is_abnormal
    fpr = float(flagged[~pos].mean()) if np.any(~pos) else float("nan")
    tpr = float(flagged[pos].mean()) if np.any(pos) else float("nan")
    return fpr, tpr


def decision_boundary(scores: ScoreSet, target_fpr: float) -> Boundary:
    """Smallest cut (midpoints between adjacent unique scores) with FPR <= target."""
    if not 0.0 <= target_fpr <= 1.0:
        raise ContractError("target_fpr must lie in [0, 1]")
    u = np.unique(scores.scores)
    lo = u[0] - 1.0 if np.isfinite(u[0]) else u[0]
    cuts = [lo]
    for a, b in zip(u[:-1], u[1:]):
        cuts.append((a + b) / 2 if np.isfinite(b) else a)
    cuts.append(u[-1])
    for c in cuts:
        fpr, tpr = _rates(scores, c)
        if fpr <= target_fpr:
            return Boundary(float(c), fpr, tpr, target_fpr)
    fpr, tpr = _rates(scores, cuts[-1])
    return Boundary(float(cuts[-1]), fpr, tpr, target_fpr)


def perfect_separation(scores: ScoreSet) -> Boundary:
    """Boundary at FPR 0; its ``tpr`` is 1.0 iff the classes are separable."""
    return decision_boundary(scores, 0.0)


def autocorrelation(x) -> np.ndarray:
    """Mean over samples of the biased per-sample autocorrelation (lag 0 == 1)."""
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ContractError("autocorrelation needs at least two samples")
    xc = x - x.mean(axis=1, keepdims=True)
    T = x.shape[1]
    power = np.fft.rfft(xc, n=2 * T, axis=1)
    acov = np.fft.irfft(power * np.conj(power), axis=1)[:, :T]
    c0 = acov[:, :1]
    if np.any(c0 <= 1e-300):
        raise DataError("constant series has no autocorrelation")
    return (acov / c0).mean(axis=0)


def histogram(scores: ScoreSet, bins: int = 30) -> dict:
    finite = np.isfinite(scores.scores)
    if not np.any(finite):
        edges = np.linspace(0, 1, bins + 1)
    else:
        edges = np.histogram_bin_edges(scores.scores[finite], bins=bins)
    out = {"edges": edges}
    for label in ("normal", "abnormal"):
        sel = finite & (scores.labels == label)
        out[label] = np.histogram(scores.scores[sel], bins=edges)[0]
        out[f"{label}_nonfinite"] = int(np.sum(~finite & (scores.labels == label)))
    return out


# -- artifact writers -------------------------------------------------------
def write_scores(scores: ScoreSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label", "score", "divergent"])
        for i, (lab, s, d) in enumerate(zip(scores.labels, scores.scores, scores.divergent)):
            w.writerow([i, lab, repr(float(s)), int(d)])


def write_roc(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def write_histogram(hist: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "normal", "abnormal"])
        e = hist["edges"]
        for i in range(len(e) - 1):
            w.writerow([repr(float(e[i])), repr(float(e[i + 1])), int(hist["normal"][i]), int(hist["abnormal"][i])])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class EvalResult:
    model: str
    set_name: str
    scores: ScoreSet
    curve: RocCurve
    boundary: Boundary
    separation: Boundary
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "model": self.model, "set": self.set_name, "auc": self.curve.auc,
            "boundary": {"threshold": self.boundary.threshold, "target_fpr": self.boundary.target_fpr,
                         "fpr": self.boundary.fpr, "tpr": self.boundary.tpr},
            "zero_fpr_tpr": self.separation.tpr,
            "n_divergent": int(np.sum(self.scores.divergent)),
            **self.extra,
        }


def evaluate_pair(name: str, set_name: str, normal: ScoreSet, abnormal: ScoreSet,
                  target_fpr: float = 0.05) -> EvalResult:
    combined = normal + abnormal
    return EvalResult(name, set_name, combined, roc(combined),
                      decision_boundary(combined, target_fpr), perfect_separation(combined))
