"""Local Outlier Factor in novelty mode (fit on normal data, score new points).

Neighbourhoods hold exactly ``min_pts`` points; distance ties are broken by
the lower fitted index. Fitted points never count themselves as neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError

METRICS = ("chebyshev", "euclidean")


@dataclass
class LofModel:
    points: np.ndarray
    min_pts: int = 50
    metric: str = "chebyshev"
    k_distance: np.ndarray | None = None
    lrd: np.ndarray | None = None
    normalizer: dict | None = None

    @property
    def input_dim(self) -> int:
        return self.points.shape[1]


def distances(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    if metric not in METRICS:
        raise ContractError(f"unknown metric {metric!r}")
    return cdist(np.atleast_2d(a), np.atleast_2d(b), metric=metric)


def _knn(dist: np.ndarray, k: int) -> np.ndarray:
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _lrd(dist_to_nn: np.ndarray, k_distance_of_nn: np.ndarray) -> np.ndarray:
    reach = np.maximum(k_distance_of_nn, dist_to_nn)
    mean_reach = reach.mean(axis=1)
    with np.errstate(divide="ignore"):
        return np.where(mean_reach > 0, 1.0 / mean_reach, np.inf)


def lof_fit(points, min_pts: int = 50, metric: str = "chebyshev") -> LofModel:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ContractError("points must be [N, D]")
    if not 0 < min_pts < len(X):
        raise ContractError(f"need N > min_pts > 0 (N={len(X)}, min_pts={min_pts})")
    d = distances(X, X, metric)
    np.fill_diagonal(d, np.inf)
    nn = _knn(d, min_pts)
    d_nn = np.take_along_axis(d, nn, axis=1)
    k_distance = d_nn[:, -1]
    lrd = _lrd(d_nn, k_distance[nn])
    return LofModel(X, min_pts, metric, k_distance, lrd)


def lof_score(model: LofModel, query) -> np.ndarray:
    """LOF of each query row; ~1 for inliers, larger for outliers."""
    Q = np.asarray(query, dtype=np.float64)
    if Q.size == 0:
        return np.empty(0)
    Q = Q.reshape(-1, model.points.shape[1])
    d = distances(Q, model.points, model.metric)
    nn = _knn(d, model.min_pts)
    d_nn = np.take_along_axis(d, nn, axis=1)
    lrd_q = _lrd(d_nn, model.k_distance[nn])
    neigh = model.lrd[nn]
    out = np.empty(len(Q))
    for i in range(len(Q)):
        if np.isinf(lrd_q[i]):
            out[i] = 0.0  # query sits on a coincident cluster: maximally dense
        elif np.any(np.isinf(neigh[i])):
            out[i] = np.inf
        else:
            out[i] = neigh[i].mean() / lrd_q[i]
    return out


def to_dict(model: LofModel) -> dict:
    return {"points": model.points.tolist(), "min_pts": model.min_pts, "metric": model.metric}


def from_dict(d: dict) -> LofModel:
    return lof_fit(np.asarray(d["points"], dtype=np.float64), d["min_pts"], d["metric"])
