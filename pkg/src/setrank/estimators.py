"""scikit-learn style wrappers around the trainers.

>>> est = SetRankMF(rank=8, epochs=20).fit(dataset)          # doctest: +SKIP
>>> est.recommend([0, 1], k=5)                              # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_implicit, check_users
from .bpr import train_bpr
from .data import TRAIN, VALIDATION
from .factors import TrainConfig
from .metrics import evaluate
from .trainer import train


class _FactorRecommender(BaseEstimator):
    def _config(self) -> TrainConfig:
        return TrainConfig(
            rank=self.rank,
            lam=self.lam,
            gamma=self.learning_rate,
            decay=getattr(self, "decay", 1.0),
            tau=getattr(self, "tau", 1.0),
            epochs=self.epochs,
            seed=self.random_state,
            init_std=self.init_std,
        )

    def _fit_result(self, result, ds):
        self.model_ = result.model
        self.log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.n_users_, self.n_items_ = ds.n_users, ds.n_items
        self.dataset_ = ds
        return self

    @property
    def user_factors_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.U.T

    @property
    def item_factors_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.V.T

    def decision_function(self, users=None) -> np.ndarray:
        """Score matrix of shape (len(users), n_items)."""
        check_is_fitted(self, "model_")
        return self.model_.score_matrix(check_users(users, self.n_users_))

    predict = decision_function

    def recommend(self, users=None, k: int = 10, exclude_seen: bool = True) -> np.ndarray:
        """Top-``k`` item indices per user; train and validation items are
        skipped when ``exclude_seen``."""
        check_is_fitted(self, "model_")
        users = check_users(users, self.n_users_)
        S = self.model_.score_matrix(users)
        if exclude_seen:
            for row, i in enumerate(users):
                S[row, self.dataset_.items(int(i), TRAIN, VALIDATION)] = -np.inf
        return np.argsort(-S, axis=1, kind="stable")[:, :k]

    def score(self, X=None, y=None) -> float:
        """Test P@5 on ``X`` (the fitted dataset by default)."""
        check_is_fitted(self, "model_")
        ds = self.dataset_ if X is None else check_implicit(X)
        return evaluate(self.model_, ds, (5,)).precision[5]


class SetRankMF(_FactorRecommender):
    """Matrix factorization trained with the setwise Bayesian ranking loss.

    Parameters
    ----------
    rank : int
        Latent dimension.
    lam : float
        L2 weight on all factors (Gaussian prior precision).
    learning_rate : float
        Initial full-batch gradient step.
    decay : float
        Step multiplier applied after each epoch.
    tau : float
        Sampled unobserved items per train positive and epoch.
    epochs : int
    init_std : float
        Std of the normal initialization.
    random_state : int
    n_threads : int
    """

    def __init__(
        self,
        rank=100,
        lam=0.7,
        learning_rate=0.5,
        decay=0.95,
        tau=3.0,
        epochs=200,
        init_std=0.1,
        random_state=42,
        n_threads=1,
    ):
        self.rank = rank
        self.lam = lam
        self.learning_rate = learning_rate
        self.decay = decay
        self.tau = tau
        self.epochs = epochs
        self.init_std = init_std
        self.random_state = random_state
        self.n_threads = n_threads

    def fit(self, X, y=None):
        ds = check_implicit(X)
        return self._fit_result(train(ds, self._config(), n_threads=self.n_threads), ds)


class BPRMF(_FactorRecommender):
    """Matrix factorization trained by BPR-SGD (one sampled negative per
    train positive per epoch, fixed learning rate)."""

    def __init__(self, rank=100, lam=0.01, learning_rate=0.05, epochs=100, init_std=0.1, random_state=42):
        self.rank = rank
        self.lam = lam
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.init_std = init_std
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = check_implicit(X)
        return self._fit_result(train_bpr(ds, self._config()), ds)
