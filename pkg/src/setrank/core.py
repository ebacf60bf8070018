"""Setwise preference probabilities and the MF-SetRank objective.

The strength function is ``phi(x) = exp(sigmoid(x))``, so ``log phi`` is the
logistic sigmoid: bounded, strictly increasing and 1-Lipschitz.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .data import TRAIN, ImplicitDataset
from .factors import FactorModel, frobenius_sq

sigmoid = expit


def phi(x):
    """``exp(sigmoid(x))``; values lie strictly between 1 and e."""
    return np.exp(expit(x))


def log_phi(x):
    return expit(x)


def _scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("scores must be a non-empty 1-d vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def permutation_probability(scores, perm: Sequence[int]) -> float:
    """Plackett-Luce probability of ordering ``perm`` (0-based item positions,
    best first) given ``scores``."""
    s = _scores(scores)
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != s.shape or not np.array_equal(np.sort(perm), np.arange(s.size)):
        raise ValueError(f"not a permutation of 0..{s.size - 1}: {perm.tolist()}")
    w = phi(s[perm])
    # tails[d] = sum_{l >= d} w[l]
    tails = np.cumsum(w[::-1])[::-1]
    return float(np.prod(w / tails))


def top1_probabilities(scores) -> np.ndarray:
    """Probability that each item heads the list."""
    w = phi(_scores(scores))
    return w / w.sum()


def top1_probability(scores, d: int) -> float:
    s = _scores(scores)
    if not 0 <= d < s.size:
        raise IndexError(f"index {d} out of range for {s.size} items")
    return float(top1_probabilities(s)[d])


def setwise_log_prob_scores(pos_score: float, neg_scores) -> float:
    """``log[phi(x_j) / (phi(x_j) + sum_k phi(x_k))]`` from raw scores.

    An empty negative set gives 0 (probability one), so users without
    sampled negatives contribute nothing to the loss.
    """
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.size == 0:
        return 0.0
    lp = float(expit(pos_score))
    total = np.exp(lp) + np.sum(phi(neg))
    return lp - float(np.log(total))


def setwise_log_prob(model: FactorModel, user: int, pos: int, negatives) -> float:
    """Log-probability that ``user`` prefers item ``pos`` over the set ``negatives``."""
    negatives = np.asarray(negatives, dtype=np.int64).ravel()
    if np.any(negatives == pos):
        raise ValueError(f"positive item {pos} also listed among negatives")
    scores = model.score_user(user)
    return setwise_log_prob_scores(scores[pos], scores[negatives])


def objective(
    model: FactorModel,
    ds: ImplicitDataset,
    negatives: Sequence[np.ndarray] | Mapping[int, np.ndarray],
    lam: float,
) -> float:
    """Negative log-posterior of the train positives against sampled negatives.

    ``negatives[i]`` is user ``i``'s sampled unobserved set.  The prior term
    is ``lam / 2 * (||U||_F^2 + ||V||_F^2)``.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    model.check_compatible(ds.n_users, ds.n_items)
    total = 0.0
    for i in range(ds.n_users):
        pos = ds.items(i, TRAIN)
        if pos.size == 0:
            continue
        neg = np.asarray(negatives[i], dtype=np.int64)
        if neg.size == 0:
            continue
        u = model.U[:, i]
        xp = u @ model.V[:, pos]
        xn = u @ model.V[:, neg]
        lp = expit(xp)
        sum_neg = np.sum(phi(xn))
        total += float(np.sum(np.log(np.exp(lp) + sum_neg) - lp))
    return total + 0.5 * lam * frobenius_sq(model)
