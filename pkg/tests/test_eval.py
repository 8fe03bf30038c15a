import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flownovel.datagen import TimeSeriesBatch
from flownovel.errors import ContractError
from flownovel.evaluate import (ScoreSet, auc, autocorrelation, decision_boundary, histogram,
                                perfect_separation, roc, score_batch, write_roc, write_scores)
from flownovel.lof import lof_fit
from flownovel.made import build_made
from flownovel.maf import MafStack
from flownovel.cnf import build_cnf


def pairwise_auc(scores, labels):
    """Mann-Whitney statistic: P(abnormal > normal) + 0.5 P(tie)."""
    pos = [s for s, l in zip(scores, labels) if l == "abnormal"]
    neg = [s for s, l in zip(scores, labels) if l == "normal"]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def S(scores, labels):
    return ScoreSet(np.asarray(scores, dtype=float), np.asarray(labels, dtype=object))


def test_worked_auc_example():
    s = S([0.1, 0.4, 0.35, 0.8], ["normal", "normal", "abnormal", "abnormal"])
    assert auc(s) == 0.75
    assert pairwise_auc(s.scores, s.labels) == 0.75
    # labelled n, a, n, a the same scores separate perfectly
    s = S([0.1, 0.4, 0.35, 0.8], ["normal", "abnormal", "normal", "abnormal"])
    assert auc(s) == pairwise_auc(s.scores, s.labels) == 1.0


def test_perfect_and_identical():
    sep = S([0.1, 0.2, 0.9, 1.0], ["normal", "normal", "abnormal", "abnormal"])
    c = roc(sep)
    assert c.auc == 1.0 and (0.0, 1.0) in c.points
    same = S([0.3, 0.3, 0.7, 0.7], ["normal", "abnormal", "normal", "abnormal"])
    assert auc(same) == 0.5


label_lists = st.lists(st.sampled_from(["normal", "abnormal"]), min_size=2, max_size=40).filter(
    lambda ls: "normal" in ls and "abnormal" in ls)


@settings(max_examples=200, deadline=None)
@given(data=st.data(), labels=label_lists)
def test_trapezoid_auc_equals_rank_statistic(data, labels):
    # coarse integer grid forces plenty of ties
    scores = data.draw(st.lists(st.integers(0, 6), min_size=len(labels), max_size=len(labels)))
    s = S(np.array(scores, dtype=float) / 4, labels)
    assert auc(s) == pytest.approx(pairwise_auc(s.scores, s.labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(data=st.data(), labels=label_lists)
def test_orientation_invariance(data, labels):
    scores = data.draw(st.lists(st.floats(-5, 5), min_size=len(labels), max_size=len(labels)))
    swapped = ["abnormal" if l == "normal" else "normal" for l in labels]
    assert auc(S(scores, labels)) == pytest.approx(auc(S(-np.array(scores), swapped)), abs=1e-12)


def test_roc_is_monotone_and_anchored():
    rng = np.random.default_rng(0)
    s = S(np.r_[rng.normal(size=50), rng.normal(1, size=40)], ["normal"] * 50 + ["abnormal"] * 40)
    c = roc(s)
    assert c.fpr[0] == 0 and c.tpr[0] == 0 and c.fpr[-1] == 1 and c.tpr[-1] == 1
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    assert np.all(np.diff(c.thresholds) < 0)


def test_roc_needs_both_classes():
    with pytest.raises(ContractError):
        roc(S([1.0, 2.0], ["normal", "normal"]))


def test_boundary_examples():
    sep = S([0.1, 0.2, 0.9, 1.0], ["normal", "normal", "abnormal", "abnormal"])
    b = decision_boundary(sep, 0.0)
    assert b.threshold == pytest.approx(0.55) and b.tpr == 1.0 and b.fpr == 0.0
    b = decision_boundary(sep, 1.0)
    assert b.threshold < 0.1 and b.tpr == 1.0 and b.fpr == 1.0
    assert perfect_separation(sep).tpr == 1.0
    overlap = S([0.1, 0.5, 0.4, 0.9], ["normal", "normal", "abnormal", "abnormal"])
    assert perfect_separation(overlap).tpr == 0.5


@settings(max_examples=100, deadline=None)
@given(data=st.data(), labels=label_lists, target=st.floats(0, 1))
def test_boundary_respects_target_fpr(data, labels, target):
    scores = data.draw(st.lists(st.integers(0, 8), min_size=len(labels), max_size=len(labels)))
    s = S(scores, labels)
    b = decision_boundary(s, target)
    assert b.fpr <= target + 1e-12
    # no lower cut among midpoints achieves the target with a higher TPR
    flagged = s.scores > b.threshold
    assert b.tpr == pytest.approx(flagged[s.is_abnormal].mean())


def test_infinite_scores_rank_on_top():
    s = S([0.1, 0.2, np.inf, 0.5], ["normal", "normal", "abnormal", "abnormal"])
    assert auc(s) == 1.0
    b = perfect_separation(s)
    assert b.tpr == 1.0 and np.isfinite(b.threshold)


def test_identity_flow_score_at_origin():
    D = 100
    model = MafStack([build_made(D, [4], 2, seed=0, zero_last=True)], D)
    s = score_batch(model, TimeSeriesBatch(np.zeros((2, D))), check_normalizer=False)
    assert np.allclose(s.scores, 0.5 * math.log(2 * math.pi), atol=1e-14)
    assert abs(s.scores[0] - 0.91894) < 1e-5
    cnf = build_cnf(D, hidden_sizes=(4,))
    s = score_batch(cnf, TimeSeriesBatch(np.zeros((1, D))), check_normalizer=False)
    assert abs(s.scores[0] - 0.91894) < 1e-5


def test_lof_inlier_score_near_one():
    g = np.arange(10.0)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    s = score_batch(lof_fit(pts, 8), TimeSeriesBatch(np.array([[4.0, 5.0]])), check_normalizer=False)
    assert 0.8 <= s.scores[0] <= 1.2


def test_normalizer_mismatch_is_rejected():
    model = lof_fit(np.random.default_rng(0).normal(size=(20, 2)), 4)
    model.normalizer = {"mean": np.zeros(2), "std": np.ones(2)}
    batch = TimeSeriesBatch(np.zeros((1, 2)), normalizer={"mean": np.ones(2), "std": np.ones(2)})
    with pytest.raises(ContractError):
        score_batch(model, batch)
    with pytest.raises(ContractError):
        score_batch(model, TimeSeriesBatch(np.zeros((1, 2))))


def test_autocorrelation_examples():
    x = np.random.default_rng(0).normal(size=(5000, 100))
    acf = autocorrelation(x)
    assert acf[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(acf[1:])) < 0.05
    # direct-sum oracle for the same estimator
    xc = x[:3] - x[:3].mean(axis=1, keepdims=True)
    direct = np.mean([[np.dot(r[:100 - k], r[k:]) / np.dot(r, r) for k in range(100)] for r in xc], axis=0)
    assert np.allclose(autocorrelation(x[:3]), direct, atol=1e-12)


def test_histogram_and_writers(tmp_path):
    s = S([0.1, 0.4, np.inf, 0.8], ["normal", "abnormal", "abnormal", "abnormal"])
    h = histogram(s, bins=4)
    assert h["normal"].sum() == 1 and h["abnormal"].sum() == 2 and h["abnormal_nonfinite"] == 1
    write_roc(roc(s), tmp_path / "roc.csv")
    write_scores(s, tmp_path / "scores.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "threshold,fpr,tpr" and lines[1] == "inf,0.0,0.0"
    assert (tmp_path / "scores.csv").read_text().splitlines()[3] == "2,abnormal,inf,0"
