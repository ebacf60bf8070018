import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setrank.data import TEST, TRAIN, VALIDATION, ImplicitDataset
from setrank.factors import FactorModel, random_model
from setrank.metrics import (
    average_precision_at,
    evaluate,
    map_at,
    precision_at,
    random_precision,
    rank_items,
    rank_scores,
    recall_at,
)


def test_hand_example_three_hits_on_top():
    ranking, rel = [10, 11, 12, 13, 14, 15], [10, 11, 12]
    assert precision_at(ranking, rel, 5) == 0.6
    assert recall_at(ranking, rel, 5) == 1.0
    assert average_precision_at(ranking, rel, 5) == 1.0


def test_hand_example_no_hits():
    ranking, rel = [0, 1, 2, 3, 4, 5, 6], [6]
    assert precision_at(ranking, rel, 5) == 0.0
    assert recall_at(ranking, rel, 5) == 0.0
    assert average_precision_at(ranking, rel, 5) == 0.0


def test_hand_example_single_hit_at_two():
    ranking, rel = [3, 7, 1, 2, 0], [7]
    assert precision_at(ranking, rel, 5) == 0.2
    assert recall_at(ranking, rel, 5) == 1.0
    assert average_precision_at(ranking, rel, 5) == 0.5


def test_map_and_errors():
    assert map_at([[1, 2], [2, 1]], [[1], [1]], 2) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        recall_at([1], [], 1)
    with pytest.raises(ValueError):
        precision_at([1], [1], 0)


def test_recall_is_monotone_in_cutoff():
    g = np.random.default_rng(0)
    for _ in range(1000):
        M = int(g.integers(2, 40))
        ranking = g.permutation(M)
        rel = g.choice(M, size=int(g.integers(1, M + 1)), replace=False)
        values = [recall_at(ranking, rel, k) for k in range(1, M + 1)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[-1] == 1.0


def test_all_tie_ranking_is_ascending_index():
    ds = ImplicitDataset.from_lists([[1, 3, 4]], 6, tags=[[TRAIN, VALIDATION, TEST]])
    model = FactorModel(np.zeros((2, 1)), np.zeros((2, 6)))
    assert rank_items(model, ds, 0).tolist() == [0, 2, 4, 5]


def test_single_high_score_first():
    scores = np.zeros(5)
    scores[3] = 1.0
    assert rank_scores(scores).tolist() == [3, 0, 1, 2, 4]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_ranking_matches_sort_oracle(seed):
    g = np.random.default_rng(seed)
    # coarse scores so that ties occur
    scores = np.round(g.normal(size=30), 1)
    exclude = g.choice(30, size=5, replace=False)
    oracle = sorted((l for l in range(30) if l not in set(exclude)), key=lambda l: (-scores[l], l))
    assert rank_scores(scores, exclude).tolist() == oracle


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10))
def test_metrics_invariant_to_positive_scaling(seed, c):
    g = np.random.default_rng(seed)
    ds = ImplicitDataset.from_lists(
        [g.choice(20, 6, replace=False) for _ in range(4)], 20, tags=[[0, 0, 0, 1, 2, 2]] * 4
    )
    m = random_model(4, 20, 3, rng=g)
    scaled = FactorModel(m.U * c, m.V)
    a = evaluate(m, ds, (1, 5, 10))
    b = evaluate(scaled, ds, (1, 5, 10))
    assert a.precision == b.precision and a.map == b.map


def test_evaluate_matches_per_user_definitions(split_ds):
    m = random_model(split_ds.n_users, split_ds.n_items, 3, rng=1)
    rep = evaluate(m, split_ds, (3, 5), per_user=True)
    ps, rs, aps = [], [], []
    for i in range(split_ds.n_users):
        ranking = rank_items(m, split_ds, i)
        rel = split_ds.items(i, TEST)
        ps.append(precision_at(ranking, rel, 5))
        rs.append(recall_at(ranking, rel, 5))
        aps.append(average_precision_at(ranking, rel, 5))
    assert rep.precision[5] == pytest.approx(np.mean(ps), abs=1e-15)
    assert rep.recall[5] == pytest.approx(np.mean(rs), abs=1e-15)
    assert rep.map[5] == pytest.approx(np.mean(aps), abs=1e-15)
    assert len(rep.per_user) == split_ds.n_users
    assert rep.per_user_tsv().count("\n") == split_ds.n_users + 1


def test_report_serialization(split_ds):
    m = random_model(split_ds.n_users, split_ds.n_items, 3, rng=1)
    rep = evaluate(m, split_ds, (5, 10))
    d = json.loads(rep.to_json())
    assert set(d["metrics"]) == {"precision", "recall", "map"}
    assert set(d["metrics"]["precision"]) == {"5", "10"}
    lines = rep.to_tsv().splitlines()
    assert lines[0] == "metric\tcutoff\tvalue" and len(lines) == 1 + 6 + 2


def test_validation_split_and_random_baseline(split_ds):
    m = random_model(split_ds.n_users, split_ds.n_items, 3, rng=1)
    rep = evaluate(m, split_ds, (5,), split="validation")
    assert rep.n_users == split_ds.n_users
    with pytest.raises(ValueError):
        evaluate(m, split_ds, (5,), split="bogus")
    # 15 items, 4 excluded, 2 test positives each: 5 * 2 / 11 / 5
    assert random_precision(split_ds, 5) == pytest.approx(2 / 11)
