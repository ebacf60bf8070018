"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import TRAIN, ImplicitDataset


def check_implicit(X) -> ImplicitDataset:
    """Coerce ``X`` to an :class:`ImplicitDataset`.

    Accepts a dataset as-is, or a binary (n_users, n_items) dense array /
    sparse matrix whose non-zeros become train positives.
    """
    if isinstance(X, ImplicitDataset):
        if X.n_users == 0 or X.n_positives == 0:
            raise ValueError("dataset has no positives")
        return X
    if sp.issparse(X):
        X = sp.csr_matrix(X)
    else:
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValueError(f"expected a 2-d interaction matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("interaction matrix contains non-finite values")
        X = sp.csr_matrix(X)
    X.eliminate_zeros()
    if X.nnz == 0:
        raise ValueError("interaction matrix has no positives")
    if X.shape[1] < 2:
        raise ValueError("need at least two items")
    positives = [X.indices[X.indptr[i] : X.indptr[i + 1]] for i in range(X.shape[0])]
    tags = [np.full(p.size, TRAIN, dtype=np.uint8) for p in positives]
    return ImplicitDataset.from_lists(positives, X.shape[1], tags=tags)


def check_users(users, n_users: int) -> np.ndarray:
    if users is None:
        return np.arange(n_users)
    users = np.atleast_1d(np.asarray(users))
    if users.dtype.kind not in "iu":
        raise ValueError("user indices must be integers")
    if users.size and (users.min() < 0 or users.max() >= n_users):
        raise IndexError(f"user index out of range [0, {n_users})")
    return users.astype(np.int64)
