import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.neighbors import LocalOutlierFactor

from flownovel.errors import ContractError
from flownovel.lof import distances, from_dict, lof_fit, lof_score, to_dict


def brute_force_lof(points, queries, k, metric):
    """Loop-level LOF straight from the definitions (novelty mode)."""
    P = [np.asarray(p, dtype=float) for p in points]

    def d(a, b):
        diff = np.abs(a - b)
        return diff.max() if metric == "chebyshev" else float(np.sqrt((diff ** 2).sum()))

    def knn(q, exclude=None):
        cand = [(d(q, P[j]), j) for j in range(len(P)) if j != exclude]
        cand.sort()  # distance, then lower index
        return cand[:k]

    kdist = [knn(P[i], i)[-1][0] for i in range(len(P))]

    def lrd(q, exclude=None):
        reach = [max(kdist[j], dist) for dist, j in knn(q, exclude)]
        m = sum(reach) / k
        return np.inf if m == 0 else 1.0 / m

    lrd_fit = [lrd(P[i], i) for i in range(len(P))]
    out = []
    for q in queries:
        q = np.asarray(q, dtype=float)
        neigh = [lrd_fit[j] for _, j in knn(q)]
        out.append(sum(neigh) / k / lrd(q))
    return np.array(out), np.array(lrd_fit)


@pytest.mark.parametrize("metric", ["chebyshev", "euclidean"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_brute_force_oracle_exactly(metric, seed):
    rng = np.random.default_rng(seed)
    N = [60, 120, 200][seed]
    pts = rng.normal(size=(N, 4))
    q = np.vstack([rng.normal(size=(15, 4)), rng.normal(size=(5, 4)) * 4])
    k = [5, 10, 20][seed]
    model = lof_fit(pts, k, metric)
    expect_scores, expect_lrd = brute_force_lof(pts, q, k, metric)
    assert np.allclose(model.lrd, expect_lrd, rtol=1e-12, atol=0)
    assert np.allclose(lof_score(model, q), expect_scores, rtol=1e-12, atol=0)


def test_agrees_with_sklearn_novelty_mode():
    rng = np.random.default_rng(7)
    pts, q = rng.normal(size=(150, 5)), rng.normal(size=(30, 5)) * 1.5
    ref = LocalOutlierFactor(n_neighbors=12, metric="chebyshev", novelty=True).fit(pts)
    ours = lof_score(lof_fit(pts, 12, "chebyshev"), q)
    assert np.allclose(ours, -ref.score_samples(q), rtol=1e-10)


def test_chebyshev_distance_value_and_symmetry():
    assert distances([[0.0, 0.0]], [[3.0, -4.0]], "chebyshev")[0, 0] == 4.0
    a, b = np.random.default_rng(0).normal(size=(2, 6, 3))
    assert np.array_equal(distances(a, b, "chebyshev"), distances(b, a, "chebyshev").T)
    assert np.allclose(distances(a, b, "chebyshev"), np.abs(a[:, None] - b[None]).max(-1))


def grid10():
    g = np.arange(10.0)
    return np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)


@pytest.mark.parametrize("metric", ["chebyshev", "euclidean"])
def test_uniform_grid_lrd_within_factor_two(metric):
    model = lof_fit(grid10(), 8, metric)
    _, oracle_lrd = brute_force_lof(grid10(), [], 8, metric)
    assert np.allclose(model.lrd, oracle_lrd)
    assert model.lrd.max() / model.lrd.min() <= 2.0


def test_deep_inlier_and_far_outlier():
    pts = grid10()
    model = lof_fit(pts, 8, "chebyshev")
    inlier = lof_score(model, [[4.0, 5.0]])[0]
    assert 0.8 <= inlier <= 1.2
    diameter = 9.0
    far = lof_score(model, [[4.5 + 10 * diameter, 4.5]])[0]
    assert far > 2.0
    assert np.isclose(far, brute_force_lof(pts, [[94.5, 4.5]], 8, "chebyshev")[0][0])


def test_empty_query():
    model = lof_fit(grid10(), 8)
    assert lof_score(model, np.empty((0, 2))).shape == (0,)


def test_duplicates_and_coincident_cluster():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(size=(30, 2)), np.repeat([[0.2, 0.1]], 3, axis=0)])
    model = lof_fit(pts, 5)
    assert np.all(np.isfinite(model.lrd)) and np.all(model.lrd > 0)
    # a cluster of identical points larger than k: k-distance 0, lrd infinite
    stack = np.vstack([np.zeros((10, 2)), rng.normal(size=(20, 2)) + 5])
    m2 = lof_fit(stack, 4)
    assert np.all(np.isinf(m2.lrd[:10]))
    assert lof_score(m2, [[0.0, 0.0]])[0] == 0.0
    assert np.isposinf(lof_score(m2, [[0.01, 0.0]])[0])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100.0))
def test_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    pts, q = rng.normal(size=(40, 3)), rng.normal(size=(8, 3)) * 2
    a = lof_score(lof_fit(pts, 6), q)
    b = lof_score(lof_fit(pts * c, 6), q * c)
    assert np.allclose(a, b, rtol=1e-9)


def test_contract_and_round_trip():
    with pytest.raises(ContractError):
        lof_fit(np.zeros((5, 2)), 5)
    with pytest.raises(ContractError):
        lof_fit(np.ones((10, 2)), 3, "manhattan")
    model = lof_fit(np.random.default_rng(0).normal(size=(20, 3)), 4)
    q = np.random.default_rng(1).normal(size=(3, 3))
    assert np.array_equal(lof_score(from_dict(to_dict(model)), q), lof_score(model, q))
