"""Latent factor model ``X = U^T V`` and its training configuration."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import (
    BadMagicError,
    DimensionMismatchError,
    FormatError,
    TruncatedFileError,
    VersionMismatchError,
)

MAGIC = b"SRMF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")  # magic, version, dtype width, r, N, M


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the SetRank and BPR trainers.

    ``gamma`` is the initial step size and is multiplied by ``decay`` after
    every epoch.  ``tau`` is the number of sampled unobserved items per train
    positive.
    """

    rank: int = 100
    lam: float = 0.7
    gamma: float = 0.5
    decay: float = 0.95
    tau: float = 3.0
    epochs: int = 200
    seed: int = 42
    init_std: float = 0.1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.gamma > 0:
            raise ValueError("learning rate must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if not self.tau >= 1:
            raise ValueError("tau must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.init_std >= 0:
            raise ValueError("init_std must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class FactorModel:
    """User factors ``U`` (r x N) and item factors ``V`` (r x M).

    Column ``U[:, i]`` is user ``i``'s latent vector, ``V[:, l]`` item ``l``'s.
    """

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[0] != self.V.shape[0]:
            raise ValueError("U and V must be 2-d with the same number of rows")
        if self.U.shape[0] < 1:
            raise ValueError("rank must be >= 1")

    @property
    def rank(self) -> int:
        return self.U.shape[0]

    @property
    def n_users(self) -> int:
        return self.U.shape[1]

    @property
    def n_items(self) -> int:
        return self.V.shape[1]

    def copy(self) -> "FactorModel":
        return FactorModel(self.U.copy(), self.V.copy())

    def score(self, user: int, item: int) -> float:
        self._check_user(user)
        if not 0 <= item < self.n_items:
            raise IndexError(f"item {item} out of range [0, {self.n_items})")
        return float(_accumulate(self.U[:, user], self.V[:, item]))

    def score_user(self, user: int) -> np.ndarray:
        """Row of scores; entry ``l`` equals ``score(user, l)`` exactly."""
        self._check_user(user)
        return _accumulate(self.U[:, user], self.V)

    def score_matrix(self, users=None) -> np.ndarray:
        """Scores for ``users`` (all by default) as an (n_users, M) array."""
        U = self.U if users is None else self.U[:, users]
        return U.T @ self.V

    def check_compatible(self, n_users: int, n_items: int) -> None:
        if (self.n_users, self.n_items) != (n_users, n_items):
            raise DimensionMismatchError(
                f"model is {self.n_users} users x {self.n_items} items, "
                f"dataset is {n_users} x {n_items}"
            )

    def _check_user(self, user):
        if not 0 <= user < self.n_users:
            raise IndexError(f"user {user} out of range [0, {self.n_users})")

    def __eq__(self, other):
        if not isinstance(other, FactorModel):
            return NotImplemented
        return np.array_equal(self.U, other.U) and np.array_equal(self.V, other.V)


def _accumulate(u: np.ndarray, V: np.ndarray):
    """``u @ V`` summed over the rank axis in a fixed sequential order, so a
    single score and a whole row agree to the last bit."""
    acc = u[0] * V[0]
    for a in range(1, u.shape[0]):
        acc = acc + u[a] * V[a]
    return acc


def init_model(n_users: int, n_items: int, cfg: TrainConfig) -> FactorModel:
    """I.i.d. normal(0, init_std^2) factors; ``U`` is drawn before ``V``."""
    if n_users < 1 or n_items < 1:
        raise ValueError("n_users and n_items must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    U = rng.normal(0.0, 1.0, size=(cfg.rank, n_users)) * cfg.init_std
    V = rng.normal(0.0, 1.0, size=(cfg.rank, n_items)) * cfg.init_std
    return FactorModel(U, V)


def dumps(model: FactorModel) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 8, model.rank, model.n_users, model.n_items)
    return (
        header
        + np.ascontiguousarray(model.U, dtype="<f8").tobytes()
        + np.ascontiguousarray(model.V, dtype="<f8").tobytes()
    )


def loads(data: bytes) -> FactorModel:
    if len(data) >= 4 and bytes(data[:4]) != MAGIC:
        raise BadMagicError(f"not a model file (magic {bytes(data[:4])!r})")
    if len(data) < _HEADER.size:
        raise TruncatedFileError("truncated model header")
    magic, version, width, r, n, m = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"model format version {version}, expected {FORMAT_VERSION}")
    if width != 8:
        raise FormatError(f"unsupported float width {width}")
    expected = _HEADER.size + 8 * r * (n + m)
    if len(data) < expected:
        raise TruncatedFileError(f"truncated model file: {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after model")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    U = body[: r * n].reshape(r, n).copy()
    V = body[r * n :].reshape(r, m).copy()
    return FactorModel(U, V)


def save_model(model: FactorModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path, n_users: int | None = None, n_items: int | None = None) -> FactorModel:
    """Load a model file, optionally checking it against dataset dimensions."""
    with open(path, "rb") as fh:
        model = loads(fh.read())
    if n_users is not None or n_items is not None:
        model.check_compatible(
            model.n_users if n_users is None else n_users,
            model.n_items if n_items is None else n_items,
        )
    return model


def random_model(n_users, n_items, rank, rng, std=1.0) -> FactorModel:
    rng = np.random.default_rng(rng)
    return FactorModel(
        rng.normal(0.0, std, size=(rank, n_users)), rng.normal(0.0, std, size=(rank, n_items))
    )


def frobenius_sq(model: FactorModel) -> float:
    return float(np.vdot(model.U, model.U) + np.vdot(model.V, model.V))
