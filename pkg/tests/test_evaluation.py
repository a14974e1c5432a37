import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from transferability.dataset import TruePerformanceTable, glue_truth
from transferability.errors import DegenerateInputError, TransferabilityError
from transferability.estimators import ScoreRecord
from transferability.evaluation import aggregate, reciprocal_rank, spearman

# well-separated values so monotone transforms stay strictly monotone in floating point
distinct = st.lists(st.integers(-1000, 1000), min_size=3, max_size=12, unique=True).map(
    lambda v: [x / 7.0 for x in v]
)


def test_spearman_hand_value():
    # rank-difference formula: 1 - 6 * 2 / (6 * 35)
    assert spearman([1, 2, 3, 4, 5, 6], [2, 1, 3, 4, 5, 6]) == pytest.approx(0.9428571428571428, abs=1e-12)


def test_spearman_extremes():
    a = [3.0, 1.0, 4.0, 1.5, 9.0]
    assert spearman(a, a) == 1.0
    assert spearman(a, [-v for v in a]) == -1.0


def test_spearman_errors():
    with pytest.raises(DegenerateInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(TransferabilityError):
        spearman([1, 2], [2, 1])
    with pytest.raises(TransferabilityError):
        spearman([1, 2, 3], [1, 2])


@settings(max_examples=100, deadline=None)
@given(a=distinct, data=st.data())
def test_spearman_matches_scipy_and_is_monotone_invariant(a, data):
    b = data.draw(st.lists(st.integers(-5, 5), min_size=len(a), max_size=len(a)))
    if len(set(b)) < 2:
        return
    rho = spearman(a, b)
    assert rho == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)
    assert spearman(np.exp(np.asarray(a) / 1e3), np.asarray(b) ** 3) == pytest.approx(rho, abs=1e-12)


def test_reciprocal_rank_glue_cola():
    cola = glue_truth().values("CoLA")
    assert reciprocal_rank(cola, cola) == 1.0


def test_reciprocal_rank_floor():
    truth = [1, 2, 3, 4, 5, 6]
    assert reciprocal_rank([6, 5, 4, 3, 2, 1], truth) == pytest.approx(1 / 6)
    assert round(reciprocal_rank([6, 5, 4, 3, 2, 1], truth), 2) == 0.17


def test_reciprocal_rank_single_and_ties():
    assert reciprocal_rank([0.3], [50.0]) == 1.0
    # best candidate tied with two others for first: average rank 2
    assert reciprocal_rank([1, 1, 1, 0], [0, 9, 1, 2]) == pytest.approx(0.5)
    with pytest.raises(DegenerateInputError):
        reciprocal_rank([1, 2, 3], [5, 5, 1])


@settings(max_examples=60, deadline=None)
@given(scores=distinct, seed=st.integers(0, 1000))
def test_reciprocal_rank_rank_invariance(scores, seed):
    truth = list(np.random.default_rng(seed).permutation(len(scores)))
    rr = reciprocal_rank(scores, truth)
    assert 0 < rr <= 1
    assert reciprocal_rank(np.tanh(np.asarray(scores) / 1e3) * 5 + 2, truth) == rr


def table():
    return TruePerformanceTable({
        "t1": [["a", 10.0], ["b", 20.0], ["c", 30.0]],
        "t2": [["a", 30.0], ["b", 20.0], ["c", 10.0]],
    })


def records(scores_by_task, seeds=(0,), method="m", seconds=0.5):
    out = []
    for task, scores in scores_by_task.items():
        for seed in seeds:
            for cand, s in zip("abc", scores):
                out.append(ScoreRecord(method, cand, s, seconds, seed, task))
    return out


def test_aggregate_mrr_is_mean():
    report = aggregate(records({"t1": [3, 2, 1], "t2": [3, 2, 1]}), table())
    rr = {c["task"]: c["reciprocal_rank"] for c in report.cells}
    assert rr["t1"] == pytest.approx(1 / 3)
    assert rr["t2"] == 1.0
    assert report.methods["m"]["mrr"] == pytest.approx((1 / 3 + 1) / 2)
    assert report.methods["m"]["mean_spearman"] == pytest.approx(0.0)


def test_aggregate_perfect_estimator():
    report = aggregate(records({"t1": [1, 2, 3], "t2": [3, 2, 1]}, seeds=range(5)), table())
    assert report.methods["m"]["mrr"] == 1.0
    assert report.methods["m"]["mean_spearman"] == 1.0


def test_aggregate_seed_means_at_score_level():
    recs = records({"t1": [1, 2, 3], "t2": [3, 2, 1]})
    recs += [ScoreRecord("m", "c", -10.0, 0.5, 1, "t1"), ScoreRecord("m", "a", 1.0, 0.5, 1, "t1"),
             ScoreRecord("m", "b", 2.0, 0.5, 1, "t1")]
    cell = next(c for c in aggregate(recs, table()).cells if c["task"] == "t1")
    assert cell["scores"] == [1.0, 2.0, -3.5]
    assert cell["seeds"] == [0, 1]


def test_aggregate_identical_seeds_equal_single_seed():
    one = aggregate(records({"t1": [1, 3, 2], "t2": [2, 1, 3]}), table())
    five = aggregate(records({"t1": [1, 3, 2], "t2": [2, 1, 3]}, seeds=range(5)), table())
    assert one.methods == five.methods


def test_aggregate_time_is_sum_over_candidates():
    report = aggregate(records({"t1": [1, 2, 3], "t2": [3, 2, 1]}, seconds=0.25), table())
    assert report.methods["m"]["mean_estimate_seconds"] == pytest.approx(0.75)


def test_aggregate_missing_cell():
    recs = records({"t1": [1, 2, 3], "t2": [3, 2, 1]})
    with pytest.raises(TransferabilityError, match="m/t2/c"):
        aggregate(recs[:-1], table())


def test_aggregate_constant_scores_give_zero_spearman():
    report = aggregate(records({"t1": [1, 1, 1], "t2": [3, 2, 1]}), table())
    cell = next(c for c in report.cells if c["task"] == "t1")
    assert cell["spearman"] == 0.0


def test_aggregate_is_order_invariant():
    recs = records({"t1": [1, 3, 2], "t2": [2, 1, 3]}, seeds=range(3))
    base = aggregate(recs, table()).to_json()
    shuffled = list(recs)
    random.Random(4).shuffle(shuffled)
    assert aggregate(shuffled, table()).to_json() == base
