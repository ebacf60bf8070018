"""Top-K ranking metrics and the held-out evaluation protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import TEST, TRAIN, VALIDATION, ImplicitDataset
from .factors import FactorModel


def rank_scores(scores: np.ndarray, exclude=()) -> np.ndarray:
    """Item indices sorted by descending score, ties by ascending index,
    with ``exclude`` removed."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    if len(exclude):
        keep = np.ones(scores.size, dtype=bool)
        keep[np.asarray(exclude, dtype=np.int64)] = False
        order = order[keep[order]]
    return order


def rank_items(model: FactorModel, ds: ImplicitDataset, user: int) -> np.ndarray:
    """Candidate ranking for ``user``: every item except their train and
    validation positives."""
    model.check_compatible(ds.n_users, ds.n_items)
    return rank_scores(model.score_user(user), ds.items(user, TRAIN, VALIDATION))


def _hits(ranking, relevant, k):
    if k < 1:
        raise ValueError("cutoff must be >= 1")
    top = np.asarray(ranking)[:k]
    return np.isin(top, np.asarray(relevant))


def precision_at(ranking, relevant, k: int) -> float:
    return float(_hits(ranking, relevant, k).sum()) / k


def recall_at(ranking, relevant, k: int) -> float:
    n_rel = len(relevant)
    if n_rel == 0:
        raise ValueError("recall undefined without relevant items")
    return float(_hits(ranking, relevant, k).sum()) / n_rel


def average_precision_at(ranking, relevant, k: int) -> float:
    """Sum of precision at each hit position within the top ``k``, divided
    by ``min(k, len(relevant))`` so that a perfect ranking scores 1."""
    n_rel = len(relevant)
    if n_rel == 0:
        raise ValueError("average precision undefined without relevant items")
    hits = _hits(ranking, relevant, k)
    if not hits.any():
        return 0.0
    prec = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(prec[hits])) / min(k, n_rel)


def map_at(rankings: Sequence, relevants: Sequence, k: int) -> float:
    """Mean of :func:`average_precision_at` over users with relevant items."""
    aps = [average_precision_at(r, rel, k) for r, rel in zip(rankings, relevants) if len(rel)]
    return float(np.mean(aps)) if aps else 0.0


@dataclass
class EvalReport:
    cutoffs: list[int]
    precision: dict[int, float]
    recall: dict[int, float]
    map: dict[int, float]
    n_users: int
    n_skipped: int
    split: str = "test"
    per_user: list[dict] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "cutoffs": list(self.cutoffs),
            "n_users": self.n_users,
            "n_skipped": self.n_skipped,
            "metrics": {
                name: {str(k): values[k] for k in self.cutoffs}
                for name, values in (
                    ("precision", self.precision),
                    ("recall", self.recall),
                    ("map", self.map),
                )
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        lines = ["metric\tcutoff\tvalue"]
        for name, values in (("precision", self.precision), ("recall", self.recall), ("map", self.map)):
            for k in self.cutoffs:
                lines.append(f"{name}\t{k}\t{values[k]:.10f}")
        lines.append(f"n_users\t-\t{self.n_users}")
        lines.append(f"n_skipped\t-\t{self.n_skipped}")
        return "\n".join(lines) + "\n"

    def per_user_tsv(self) -> str:
        if self.per_user is None:
            raise ValueError("report was computed without per-user rows")
        cols = ["user", "n_relevant"]
        for k in self.cutoffs:
            cols += [f"p@{k}", f"r@{k}", f"ap@{k}"]
        lines = ["\t".join(cols)]
        for row in self.per_user:
            vals = [row["user"], str(row["n_relevant"])]
            for k in self.cutoffs:
                vals += [f"{row[f'p@{k}']:.10f}", f"{row[f'r@{k}']:.10f}", f"{row[f'ap@{k}']:.10f}"]
            lines.append("\t".join(vals))
        return "\n".join(lines) + "\n"


def top_k_items(
    model: FactorModel, ds: ImplicitDataset, k: int, exclude_splits=(TRAIN, VALIDATION), users=None, chunk=1024
) -> list[np.ndarray]:
    """Top-``k`` candidate items per user, same ordering rule as :func:`rank_items`."""
    users = np.arange(ds.n_users) if users is None else np.asarray(users)
    out = []
    for start in range(0, users.size, chunk):
        block = users[start : start + chunk]
        S = model.score_matrix(block)
        for row, i in enumerate(block):
            S[row, ds.items(int(i), *exclude_splits)] = -np.inf
        order = np.argsort(-S, axis=1, kind="stable")[:, :k]
        for row, i in enumerate(block):
            n_cand = ds.n_items - ds.items(int(i), *exclude_splits).size
            out.append(order[row, : min(k, n_cand)])
    return out


def evaluate(
    model: FactorModel,
    ds: ImplicitDataset,
    cutoffs: Sequence[int] = (5, 10),
    split: str = "test",
    per_user: bool = False,
) -> EvalReport:
    """Mean P@k, R@k and MAP@k over users with at least one held-out positive.

    ``split="test"`` ranks everything except train and validation positives
    against the test positives.  ``split="validation"`` ranks everything
    except train positives against the validation positive.
    """
    model.check_compatible(ds.n_users, ds.n_items)
    cutoffs = sorted({int(k) for k in cutoffs})
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    if split == "test":
        target, exclude = TEST, (TRAIN, VALIDATION)
    elif split == "validation":
        target, exclude = VALIDATION, (TRAIN,)
    else:
        raise ValueError(f"unknown split {split!r}")

    kmax = cutoffs[-1]
    tops = top_k_items(model, ds, kmax, exclude_splits=exclude)
    sums = {name: {k: 0.0 for k in cutoffs} for name in ("p", "r", "ap")}
    rows = [] if per_user else None
    n_eval = 0
    for i in range(ds.n_users):
        rel = ds.items(i, target)
        if rel.size == 0:
            continue
        n_eval += 1
        hits = np.isin(tops[i], rel)
        cum = np.cumsum(hits)
        prec = cum / np.arange(1, hits.size + 1)
        row = {"user": ds.user_tokens[i], "n_relevant": int(rel.size)}
        for k in cutoffs:
            h = int(cum[min(k, hits.size) - 1]) if hits.size else 0
            p = h / k
            r = h / rel.size
            ap = float(np.sum(prec[:k][hits[:k]])) / min(k, rel.size)
            sums["p"][k] += p
            sums["r"][k] += r
            sums["ap"][k] += ap
            row[f"p@{k}"], row[f"r@{k}"], row[f"ap@{k}"] = p, r, ap
        if rows is not None:
            rows.append(row)
    denom = max(n_eval, 1)
    return EvalReport(
        cutoffs=cutoffs,
        precision={k: sums["p"][k] / denom for k in cutoffs},
        recall={k: sums["r"][k] / denom for k in cutoffs},
        map={k: sums["ap"][k] / denom for k in cutoffs},
        n_users=n_eval,
        n_skipped=ds.n_users - n_eval,
        split=split,
        per_user=rows,
    )


def validation_precision(model: FactorModel, ds: ImplicitDataset, k: int = 5) -> float:
    """P@k against the validation positives; NaN when there are none."""
    if ds.count(VALIDATION) == 0:
        return float("nan")
    return evaluate(model, ds, (k,), split="validation").precision[k]


def random_precision(ds: ImplicitDataset, k: int = 5) -> float:
    """Expected test P@k of a uniformly random candidate ranking."""
    vals = []
    for i in range(ds.n_users):
        n_rel = ds.items(i, TEST).size
        if n_rel == 0:
            continue
        n_cand = ds.n_items - ds.items(i, TRAIN, VALIDATION).size
        # expected hits in the first k of a random permutation, divided by k
        vals.append(min(k, n_cand) * n_rel / n_cand / k)
    return float(np.mean(vals)) if vals else 0.0
