import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setrank.core import (
    objective,
    permutation_probability,
    phi,
    setwise_log_prob,
    setwise_log_prob_scores,
    top1_probabilities,
    top1_probability,
)
from setrank.data import TRAIN, ImplicitDataset
from setrank.factors import FactorModel

finite_scores = st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=5)


def mp_phi(x):
    return mpmath.e ** (1 / (1 + mpmath.e ** (-mpmath.mpf(x))))


def test_phi_values_against_mpmath():
    mpmath.mp.dps = 40
    for x in [-30.0, -2.5, 0.0, 0.3, 10.0, 40.0]:
        assert phi(x) == pytest.approx(float(mp_phi(x)), rel=1e-15)
    assert phi(0.0) == pytest.approx(math.exp(0.5), rel=1e-15)


def test_phi_is_bounded_and_increasing():
    x = np.linspace(-50, 50, 2001)
    y = phi(x)
    assert np.all(y >= 1.0) and np.all(y <= math.e)
    assert np.all(np.diff(y) >= 0)


def test_permutation_probability_trivial_cases():
    assert permutation_probability([0.7], [0]) == 1.0
    assert permutation_probability([1.0, 1.0], [0, 1]) == pytest.approx(0.5, abs=1e-15)
    assert permutation_probability([1.0, 1.0], [1, 0]) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(finite_scores)
def test_permutation_probabilities_sum_to_one(scores):
    total = math.fsum(permutation_probability(scores, p) for p in itertools.permutations(range(len(scores))))
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(finite_scores)
def test_top1_equals_first_position_marginal(scores):
    m = len(scores)
    perms = list(itertools.permutations(range(m)))
    for d in range(m):
        marginal = math.fsum(permutation_probability(scores, p) for p in perms if p[0] == d)
        assert top1_probability(scores, d) == pytest.approx(marginal, abs=1e-10)


def test_permutation_probability_against_mpmath():
    mpmath.mp.dps = 40
    scores = [1.5, -0.3, 0.0, 2.2]
    perm = [3, 0, 2, 1]
    w = [mp_phi(scores[k]) for k in perm]
    expected = mpmath.mpf(1)
    for d in range(len(w)):
        expected *= w[d] / mpmath.fsum(w[d:])
    assert permutation_probability(scores, perm) == pytest.approx(float(expected), rel=1e-13)


def test_permutation_probability_rejects_bad_input():
    with pytest.raises(ValueError):
        permutation_probability([0.0, 1.0], [0, 0])
    with pytest.raises(ValueError):
        permutation_probability([0.0, np.inf], [0, 1])


def test_top1_uniform_and_known_value():
    assert np.allclose(top1_probabilities(np.zeros(7)), 1 / 7, atol=1e-15)
    p = top1_probability([2.0, 0.0, 0.0], 0)
    assert p == pytest.approx(0.42254, abs=5e-5)
    with pytest.raises(IndexError):
        top1_probability([0.0], 1)


def test_top1_matches_exponential_race_monte_carlo():
    # The top-1 item is the first arrival among independent Exp(phi(x)) clocks.
    g = np.random.default_rng(2024)
    w = phi(np.array([2.0, 0.0, 0.0]))
    n = 10**6
    Y = g.exponential(1.0, size=(n, 3)) / w
    freq = np.mean(np.argmin(Y, axis=1) == 0)
    assert abs(freq - 0.42254) < 0.002
    assert abs(freq - top1_probability([2.0, 0.0, 0.0], 0)) < 0.002


def test_setwise_examples():
    assert setwise_log_prob_scores(0.0, np.zeros(3)) == pytest.approx(math.log(0.25), abs=1e-12)
    assert setwise_log_prob_scores(3.0, []) == 0.0
    model = FactorModel(np.zeros((2, 1)), np.zeros((2, 5)))
    assert setwise_log_prob(model, 0, 1, [0, 2, 4]) == pytest.approx(-1.386294, abs=1e-6)
    with pytest.raises(ValueError):
        setwise_log_prob(model, 0, 1, [1, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_setwise_equals_top1_on_assembled_list(seed):
    g = np.random.default_rng(seed)
    model = FactorModel(g.normal(size=(3, 2)), g.normal(size=(3, 9)))
    j = 4
    negatives = [0, 2, 7, 8]
    lst = model.score_user(1)[[j, *negatives]]
    assert setwise_log_prob(model, 1, j, negatives) == pytest.approx(math.log(top1_probability(lst, 0)), abs=1e-12)


def test_objective_zero_factors_example():
    ds = ImplicitDataset.from_lists([[0, 1]], 8, tags=[[TRAIN, TRAIN]])
    model = FactorModel(np.zeros((3, 1)), np.zeros((3, 8)))
    for lam in (0.0, 0.7, 5.0):
        assert objective(model, ds, [np.arange(2, 8)], lam) == pytest.approx(2 * math.log(7), abs=1e-12)


def test_objective_without_train_positives_is_zero():
    ds = ImplicitDataset.from_lists([[], []], 4, tags=[[], []])
    model = FactorModel(np.ones((2, 2)), np.ones((2, 4)))
    assert objective(model, ds, [np.array([0, 1]), np.array([2])], 0.0) == 0.0


def _straight_line_objective(U, V, train, negatives, lam):
    """Independent re-implementation: plain loops, math module only."""
    total = 0.0
    r = len(U)
    for i, pos in enumerate(train):
        neg = negatives[i]
        if not pos or not neg:
            continue
        def score(l):
            return sum(U[a][i] * V[a][l] for a in range(r))
        def strength(x):
            return math.exp(1.0 / (1.0 + math.exp(-x)))
        sneg = sum(strength(score(k)) for k in neg)
        for j in pos:
            pj = strength(score(j))
            total -= math.log(pj / (pj + sneg))
    reg = sum(x * x for row in U for x in row) + sum(x * x for row in V for x in row)
    return total + 0.5 * lam * reg


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_independent_oracle(seed):
    g = np.random.default_rng(seed)
    N, M, r = 4, 9, 3
    train_lists, negs = [], []
    for _ in range(N):
        perm = g.permutation(M)
        train_lists.append(sorted(perm[:3].tolist()))
        negs.append(sorted(perm[3 : 3 + g.integers(0, 6)].tolist()))
    ds = ImplicitDataset.from_lists(train_lists, M, tags=[[TRAIN] * 3] * N)
    U, V = g.normal(size=(r, N)), g.normal(size=(r, M))
    got = objective(FactorModel(U, V), ds, [np.array(n, dtype=np.int64) for n in negs], 0.3)
    want = _straight_line_objective(U.tolist(), V.tolist(), train_lists, negs, 0.3)
    assert got == pytest.approx(want, rel=1e-12)
