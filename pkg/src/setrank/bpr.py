"""Pairwise BPR baseline on the same factor model.

Per sampled triple (user i, positive j, negative k) the loss is
``-log sigmoid(x_ij - x_ik) + lam/2 (|u_i|^2 + |v_j|^2 + |v_k|^2)``, and
plain SGD with a fixed learning rate is used.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_expit

from .data import TRAIN, ImplicitDataset
from .exceptions import TrainingDivergedError
from .factors import FactorModel, TrainConfig, init_model
from .metrics import validation_precision
from .trainer import EpochRecord, TrainResult


class PairSample(NamedTuple):
    user: int
    pos: int
    neg: int


def bpr_loss(model: FactorModel, sample: PairSample, lam: float) -> float:
    i, j, k = sample
    u, vj, vk = model.U[:, i], model.V[:, j], model.V[:, k]
    diff = float(u @ (vj - vk))
    reg = 0.5 * lam * float(u @ u + vj @ vj + vk @ vk)
    return -float(log_expit(diff)) + reg


def bpr_gradients(model: FactorModel, sample: PairSample, lam: float):
    """Gradients of :func:`bpr_loss` w.r.t. ``u_i``, ``v_j`` and ``v_k``."""
    i, j, k = sample
    if j == k:
        raise ValueError("positive and negative item must differ")
    u, vj, vk = model.U[:, i], model.V[:, j], model.V[:, k]
    # d/d(diff) of -log sigmoid(diff) is -sigmoid(-diff)
    e = -float(expit(-(u @ (vj - vk))))
    return e * (vj - vk) + lam * u, e * u + lam * vj, -e * u + lam * vk


def bpr_sgd_step(model: FactorModel, sample: PairSample, lr: float, lam: float) -> None:
    """In-place SGD step touching only ``U[:, i]``, ``V[:, j]`` and ``V[:, k]``."""
    gu, gj, gk = bpr_gradients(model, sample, lam)
    i, j, k = sample
    model.U[:, i] -= lr * gu
    model.V[:, j] -= lr * gj
    model.V[:, k] -= lr * gk


def _sgd_epoch(U, V, users, pos, neg, lr, lam):
    """Sequential SGD over the epoch's triples; returns the summed loss."""
    total = 0.0
    for i, j, k in zip(users.tolist(), pos.tolist(), neg.tolist()):
        u = U[:, i].copy()
        vj = V[:, j].copy()
        vk = V[:, k].copy()
        d = vj - vk
        diff = u @ d
        total += -float(log_expit(diff))
        e = -float(expit(-diff))
        U[:, i] = u - lr * (e * d + lam * u)
        V[:, j] = vj - lr * (e * u + lam * vj)
        V[:, k] = vk - lr * (-e * u + lam * vk)
    return total


def sample_pairs(ds: ImplicitDataset, rng):
    """One uniform unobserved item for each train positive, in shuffled order."""
    users, pos, neg = [], [], []
    for i in range(ds.n_users):
        p = ds.items(i, TRAIN)
        if p.size == 0:
            continue
        n_unobs = ds.n_items - ds.positives[i].size
        if n_unobs == 0:
            continue
        # draw an index into the unobserved items, then map it past the positives
        r = rng.integers(0, n_unobs, size=p.size)
        k = r + np.searchsorted(ds.positives[i] - np.arange(ds.positives[i].size), r, side="right")
        users.append(np.full(p.size, i, dtype=np.int64))
        pos.append(p)
        neg.append(k)
    if not users:
        empty = np.empty(0, np.int64)
        return empty, empty, empty
    users, pos, neg = np.concatenate(users), np.concatenate(pos), np.concatenate(neg)
    order = rng.permutation(users.size)
    return users[order], pos[order], neg[order]


def train_bpr(ds: ImplicitDataset, cfg: TrainConfig, model: FactorModel | None = None, validate: bool = True) -> TrainResult:
    """BPR-SGD with a fixed learning rate ``cfg.gamma`` (``cfg.decay`` and
    ``cfg.tau`` are ignored).  Checkpointing follows :func:`trainer.train`."""
    model = init_model(ds.n_users, ds.n_items, cfg) if model is None else model.copy()
    model.check_compatible(ds.n_users, ds.n_items)
    result = TrainResult(model.copy())
    rng = np.random.default_rng([cfg.seed, 2])
    best_val = -math.inf
    for epoch in range(1, cfg.epochs + 1):
        users, pos, neg = sample_pairs(ds, rng)
        loss = _sgd_epoch(model.U, model.V, users, pos, neg, cfg.gamma, cfg.lam)
        if not (math.isfinite(loss) and np.all(np.isfinite(model.U)) and np.all(np.isfinite(model.V))):
            raise TrainingDivergedError(f"epoch {epoch}: BPR diverged", result.model, result.log)
        val = validation_precision(model, ds, 5) if validate else float("nan")
        result.log.append(EpochRecord(epoch, loss, val, cfg.gamma))
        if math.isnan(val):
            result.model, result.best_epoch = model.copy(), epoch
        elif val > best_val:
            best_val = val
            result.model, result.best_epoch = model.copy(), epoch
    return result
