"""Generative checks for the setwise model.

A :class:`SyntheticWorld` holds a low-rank ground-truth score matrix.
Preference structures are drawn by an exponential race: every (user, item)
gets an arrival time ``Y ~ Exp(rate)`` and each user's ``J`` earliest items
become positives.  With ``rate = phi(X*)`` the chance that a given positive
beats a given unobserved set is exactly its setwise top-1 probability.

The excess risk of an estimate is measured as the mean, over users and
their positives, of the KL divergence between the true and estimated top-1
distributions over the list ``{j} + O_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logit

from .core import phi
from .data import TRAIN, ImplicitDataset, split
from .factors import TrainConfig
from .trainer import train

DRAW_RULES = ("phi", "exp")


@dataclass
class SyntheticWorld:
    U_star: np.ndarray  # r x N
    V_star: np.ndarray  # r x M
    J: int
    alpha: float = 1.0
    seed: int = 0

    @property
    def n_users(self) -> int:
        return self.U_star.shape[1]

    @property
    def n_items(self) -> int:
        return self.V_star.shape[1]

    @property
    def K(self) -> int:
        return self.n_items - self.J

    @property
    def rank(self) -> int:
        return self.U_star.shape[0]

    @property
    def X_star(self) -> np.ndarray:
        return self.U_star.T @ self.V_star

    def head(self, n_users: int) -> "SyntheticWorld":
        """The same world restricted to its first ``n_users`` users."""
        return SyntheticWorld(self.U_star[:, :n_users].copy(), self.V_star, self.J, self.alpha, self.seed)


_WORLD_KEY = 0x5E7


def make_world(
    n_users: int,
    n_items: int,
    rank: int,
    J: int,
    alpha: float = 1.0,
    seed=0,
    scale: float = 1.0,
) -> SyntheticWorld:
    """Normal ground-truth factors whose product has entry std ``scale``.

    The factors are shrunk, if needed, until every ``sigmoid(X*)`` (the log
    strength) is at most ``alpha``.  Since the sigmoid never reaches 1 this
    is a no-op for ``alpha >= 1``.
    """
    if not 1 <= J < n_items:
        raise ValueError("need 1 <= J < n_items")
    if alpha <= 0.5:
        raise ValueError("alpha must exceed 0.5 = sigmoid(0)")
    rng = world_rng(seed, 0)
    s = (scale**2 / rank) ** 0.25
    U = rng.normal(0.0, s, size=(rank, n_users))
    V = rng.normal(0.0, s, size=(rank, n_items))
    xmax = float(np.max(U.T @ V))
    if alpha < 1 and expit(xmax) > alpha:
        c = math.sqrt(logit(alpha) / xmax)
        U, V = U * c, V * c
    return SyntheticWorld(U, V, J, alpha, seed if isinstance(seed, int) else 0)


def world_rng(seed, *key) -> np.random.Generator:
    """Generator for synthetic-world randomness.

    The streams carry their own spawn key, so they never coincide with the
    ``default_rng(seed)`` streams used for initialization and sampling
    during training, even when the integer seeds are equal.
    """
    entropy = seed if isinstance(seed, int) else [int(v) for v in seed]
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(_WORLD_KEY, *key)))


def _rates(X: np.ndarray, rule: str) -> np.ndarray:
    if rule == "phi":
        return phi(X)
    if rule == "exp":
        return np.exp(X)
    raise ValueError(f"unknown draw rule {rule!r}; expected one of {DRAW_RULES}")


def race_times(X: np.ndarray, rng, rule: str = "phi") -> np.ndarray:
    """Exponential arrival times by inverse CDF: ``-log(1 - u) / rate``."""
    u = rng.random(np.shape(X))
    return -np.log1p(-u) / _rates(X, rule)


def sample_world(world: SyntheticWorld, rng, rule: str = "phi", J: int | None = None) -> np.ndarray:
    """Positives of one race: an (N, J) array of item indices, sorted per row."""
    J = world.J if J is None else J
    Y = race_times(world.X_star, rng, rule)
    pos = np.argpartition(Y, J - 1, axis=1)[:, :J] if J < world.n_items else np.argsort(Y, axis=1)
    return np.sort(pos, axis=1)


def draw_dataset(positives: np.ndarray, n_items: int) -> ImplicitDataset:
    """Dataset with every drawn positive tagged as train."""
    return ImplicitDataset.from_lists(
        [row for row in positives], n_items, tags=[np.full(len(row), TRAIN, np.uint8) for row in positives]
    )


class McCheck(NamedTuple):
    estimate: float
    analytic: float
    z: float


def mc_check_eq5_factor(x_row, j: int, others: Sequence[int], n_samples: int, rng, chunk: int = 20000) -> McCheck:
    """Monte-Carlo estimate of P(Y_j <= min_{k in others} Y_k) under
    independent Exp(phi(x)) times, against ``phi(x_j) / (phi(x_j) + sum phi(x_k))``.

    ``z`` is the deviation in binomial standard errors (0 when the analytic
    value is 0 or 1).
    """
    x = np.asarray(x_row, dtype=np.float64)
    others = np.asarray(others, dtype=np.int64)
    if np.any(others == j):
        raise ValueError("j must not be among the compared items")
    if others.size == 0:
        return McCheck(1.0, 1.0, 0.0)
    w = phi(x)
    analytic = float(w[j] / (w[j] + np.sum(w[others])))
    idx = np.concatenate([[j], others])
    wins = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        Y = -np.log1p(-rng.random((n, idx.size))) / w[idx]
        wins += int(np.count_nonzero(Y[:, 0] <= Y[:, 1:].min(axis=1)))
        done += n
    est = wins / n_samples
    se = math.sqrt(analytic * (1.0 - analytic) / n_samples)
    z = (est - analytic) / se if se > 0 else 0.0
    return McCheck(est, analytic, z)


def excess_risk(X_star, X_hat, positives) -> float:
    """Mean over users of ``sum_{j in P_i} KL(C*_ij || C^_ij)``.

    ``C_ij`` is the top-1 distribution over ``{j} + O_i`` where ``O_i`` is
    every item outside ``P_i``; ``positives[i]`` gives ``P_i``.
    """
    X_star = np.asarray(X_star, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X_star.shape != X_hat.shape:
        raise ValueError(f"shape mismatch {X_star.shape} vs {X_hat.shape}")
    N, M = X_star.shape
    ls, lh = expit(X_star), expit(X_hat)  # log phi
    ws, wh = np.exp(ls), np.exp(lh)
    total = 0.0
    for i in range(N):
        P = np.asarray(positives[i], dtype=np.int64)
        if P.size == 0:
            continue
        mask = np.ones(M, dtype=bool)
        mask[P] = False
        delta = ls[i] - lh[i]
        so, sh = ws[i, mask].sum(), wh[i, mask].sum()
        cross_o = float(np.dot(ws[i, mask], delta[mask]))
        zs = ws[i, P] + so
        zh = wh[i, P] + sh
        # KL = sum_l C*_l (log w*_l - log w^_l) - log Z* + log Z^
        kl = (ws[i, P] * delta[P] + cross_o) / zs - np.log(zs) + np.log(zh)
        total += math.fsum(kl.tolist())
    return max(total / N, 0.0)


def fit_and_measure(
    world: SyntheticWorld,
    cfg: TrainConfig,
    train_positives: np.ndarray,
    reference_positives: np.ndarray,
) -> float:
    """Fit MF-SetRank on one drawn structure and report its excess risk on a
    reference structure."""
    ds = draw_dataset(train_positives, world.n_items)
    result = train(ds, cfg, validate=False)
    X_hat = result.model.score_matrix()
    return excess_risk(world.X_star, X_hat, reference_positives)


def default_sweep_config(rank: int, seed: int = 0) -> TrainConfig:
    return TrainConfig(rank=rank, lam=0.5, gamma=0.5, decay=0.99, tau=3, epochs=150, seed=seed, init_std=0.1)


def scaling_sweep(
    n_items: int,
    user_counts: Sequence[int],
    rank: int,
    J: int = 5,
    replicates: int = 5,
    alpha: float = 1.0,
    seed: int = 0,
    cfg: TrainConfig | None = None,
    scale: float = 1.0,
) -> list[dict]:
    """Excess risk of MF-SetRank fits as the number of users grows.

    Each replicate draws one world with ``max(user_counts)`` users; smaller
    sizes use its first users (and the matching rows of the drawn
    structures), so the sizes are nested.  Randomness for a replicate comes
    only from ``(seed, replicate)``.
    """
    if not user_counts:
        raise ValueError("user_counts must be non-empty")
    cfg = cfg or default_sweep_config(rank, seed)
    cfg = cfg.replace(rank=rank)
    n_max = max(user_counts)
    rows = []
    for rep in range(replicates):
        world = make_world(n_max, n_items, rank, J, alpha, seed=[seed, rep], scale=scale)
        train_pos = sample_world(world, world_rng([seed, rep], 1))
        ref_pos = sample_world(world, world_rng([seed, rep], 2))
        for n in user_counts:
            sub = world.head(n)
            d = fit_and_measure(sub, cfg.replace(seed=cfg.seed + rep), train_pos[:n], ref_pos[:n])
            rows.append({"N": n, "M": n_items, "r": rank, "replicate": rep, "D": d})
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    """Mean and sample std of D per N, sorted by N."""
    out = []
    for n in sorted({r["N"] for r in rows}):
        d = np.array([r["D"] for r in rows if r["N"] == n])
        out.append({"N": n, "mean_D": float(d.mean()), "std_D": float(d.std(ddof=1)) if d.size > 1 else 0.0})
    return out


def loglog_slope(summary: list[dict]) -> float:
    n = np.log([r["N"] for r in summary])
    d = np.log([r["mean_D"] for r in summary])
    return float(np.polyfit(n, d, 1)[0])


def recovery_dataset(
    n_users: int = 500,
    n_items: int = 200,
    rank: int = 5,
    n_pos: int = 20,
    seed: int = 0,
    rule: str = "exp",
    scale: float = 2.0,
    train_frac: float = 0.5,
    cap: int = 10,
) -> tuple[ImplicitDataset, SyntheticWorld]:
    """A split dataset drawn from a rank-``rank`` world for recovery tests.

    The default ``rule="exp"`` races with rates ``exp(X*)``; ``phi`` rates are
    confined to (1, e), which leaves too little signal for a recovery task.
    """
    world = make_world(n_users, n_items, rank, n_pos, seed=seed, scale=scale)
    pos = sample_world(world, world_rng(seed, 1), rule=rule)
    ds = ImplicitDataset.from_lists([row for row in pos], n_items)
    return split(ds, train_frac, cap, seed=seed), world
