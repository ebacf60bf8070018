"""Implicit-feedback datasets: ingestion, binarization, filtering, splitting
and a compact binary on-disk format.

Users and items are addressed by dense integer indices; the original string
tokens are kept in ``user_tokens`` / ``item_tokens``.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    BadMagicError,
    EmptyDatasetError,
    FormatError,
    ParseError,
    SplitError,
    TruncatedFileError,
    VersionMismatchError,
)

TRAIN, VALIDATION, TEST, UNSPLIT = 0, 1, 2, 3
TAG_NAMES = {TRAIN: "train", VALIDATION: "validation", TEST: "test", UNSPLIT: "unsplit"}

MAGIC = b"SRDS"
FORMAT_VERSION = 1

DELIMITERS = {"tab": "\t", "comma": ",", "\t": "\t", ",": ","}


class RawRating(NamedTuple):
    user: str
    item: str
    rating: float
    timestamp: int | None = None


@dataclass(eq=False)
class ImplicitDataset:
    """Binarized user -> positive-item sets with optional split labels.

    ``positives[i]`` is the sorted array of item indices user ``i`` interacted
    with and ``tags[i]`` labels each of them (``TRAIN``, ``VALIDATION``,
    ``TEST`` or ``UNSPLIT``).  Items outside ``positives[i]`` are the user's
    unobserved set.  Treat instances as read-only: per-split views are cached.
    """

    n_items: int
    positives: list[np.ndarray]
    tags: list[np.ndarray]
    user_tokens: list[str]
    item_tokens: list[str]
    _user_index: dict[str, int] = field(default=None, init=False, repr=False)
    _item_index: dict[str, int] = field(default=None, init=False, repr=False)
    _split_cache: dict = field(default_factory=dict, init=False, repr=False)

    @classmethod
    def from_lists(
        cls,
        positives: Sequence[Iterable[int]],
        n_items: int,
        tags: Sequence[Iterable[int]] | None = None,
        user_tokens: Sequence[str] | None = None,
        item_tokens: Sequence[str] | None = None,
    ) -> "ImplicitDataset":
        """Build a dataset from per-user item lists (and optional tags).

        Items are sorted per user; tags follow their items.  Duplicate items
        within one user are rejected.
        """
        pos_out, tag_out = [], []
        for i, items in enumerate(positives):
            items = np.asarray(list(items), dtype=np.int64)
            if tags is None:
                t = np.full(items.shape, UNSPLIT, dtype=np.uint8)
            else:
                t = np.asarray(list(tags[i]), dtype=np.uint8)
                if t.shape != items.shape:
                    raise ValueError(f"user {i}: tags and items differ in length")
            order = np.argsort(items, kind="stable")
            items, t = items[order], t[order]
            if items.size and (items[0] < 0 or items[-1] >= n_items):
                raise ValueError(f"user {i}: item index out of range [0, {n_items})")
            if np.any(np.diff(items) == 0):
                raise ValueError(f"user {i}: duplicate positive item")
            pos_out.append(items)
            tag_out.append(t)
        n_users = len(pos_out)
        if user_tokens is None:
            user_tokens = [str(i) for i in range(n_users)]
        if item_tokens is None:
            item_tokens = [str(j) for j in range(n_items)]
        if len(user_tokens) != n_users or len(item_tokens) != n_items:
            raise ValueError("vocabulary sizes do not match dataset dimensions")
        return cls(n_items, pos_out, tag_out, list(user_tokens), list(item_tokens))

    @property
    def n_users(self) -> int:
        return len(self.positives)

    @property
    def n_positives(self) -> int:
        return int(sum(p.size for p in self.positives))

    @property
    def is_split(self) -> bool:
        return all(not np.any(t == UNSPLIT) for t in self.tags) and self.n_positives > 0

    @property
    def user_index(self) -> dict[str, int]:
        if self._user_index is None:
            self._user_index = {tok: i for i, tok in enumerate(self.user_tokens)}
        return self._user_index

    @property
    def item_index(self) -> dict[str, int]:
        if self._item_index is None:
            self._item_index = {tok: j for j, tok in enumerate(self.item_tokens)}
        return self._item_index

    def items(self, user: int, *splits: int) -> np.ndarray:
        """Positive items of ``user`` whose tag is one of ``splits`` (all if none given)."""
        if not splits:
            return self.positives[user]
        key = tuple(sorted(set(splits)))
        cached = self._split_cache.get(key)
        if cached is None:
            cached = [p[np.isin(t, key)] for p, t in zip(self.positives, self.tags)]
            self._split_cache[key] = cached
        return cached[user]

    def train_items(self, user: int) -> np.ndarray:
        return self.items(user, TRAIN)

    def validation_items(self, user: int) -> np.ndarray:
        return self.items(user, VALIDATION)

    def test_items(self, user: int) -> np.ndarray:
        return self.items(user, TEST)

    def count(self, split: int) -> int:
        return int(sum(np.count_nonzero(t == split) for t in self.tags))

    def interaction_matrix(self, *splits: int) -> sp.csr_matrix:
        """Binary user x item CSR matrix restricted to the given splits."""
        rows, cols = [], []
        for i in range(self.n_users):
            items = self.items(i, *splits)
            rows.append(np.full(items.size, i, dtype=np.int64))
            cols.append(items)
        rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
        cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
        data = np.ones(rows.size, dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_users, self.n_items))

    def __eq__(self, other):
        if not isinstance(other, ImplicitDataset):
            return NotImplemented
        return (
            self.n_items == other.n_items
            and self.user_tokens == other.user_tokens
            and self.item_tokens == other.item_tokens
            and len(self.positives) == len(other.positives)
            and all(np.array_equal(a, b) for a, b in zip(self.positives, other.positives))
            and all(np.array_equal(a, b) for a, b in zip(self.tags, other.tags))
        )

    def __repr__(self):
        return (
            f"ImplicitDataset(n_users={self.n_users}, n_items={self.n_items}, "
            f"n_positives={self.n_positives}, split={self.is_split})"
        )


# ---------------------------------------------------------------------------
# ingestion


def read_ratings(source, delimiter: str = "\t") -> Iterator[RawRating]:
    """Parse ``user<d>item<d>rating[<d>timestamp]`` lines.

    ``source`` is a path or an iterable of text lines.  Blank lines are
    skipped; anything else that does not parse raises :class:`ParseError`
    with the 1-based line number.
    """
    delimiter = DELIMITERS.get(delimiter, delimiter)
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            yield from read_ratings(fh, delimiter)
        return
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split(delimiter)
        if len(parts) not in (3, 4):
            raise ParseError(lineno, f"expected 3 or 4 fields, got {len(parts)}")
        user, item = parts[0].strip(), parts[1].strip()
        if not user or not item:
            raise ParseError(lineno, "empty user or item id")
        try:
            rating = float(parts[2])
        except ValueError:
            raise ParseError(lineno, f"rating is not a number: {parts[2]!r}") from None
        if not math.isfinite(rating):
            raise ParseError(lineno, "rating is not finite")
        ts = None
        if len(parts) == 4 and parts[3].strip():
            try:
                ts = int(parts[3])
            except ValueError:
                raise ParseError(lineno, f"timestamp is not an integer: {parts[3]!r}") from None
        yield RawRating(user, item, rating, ts)


def binarize(ratings: Iterable[RawRating], threshold: float = 3.0) -> ImplicitDataset:
    """Keep (user, item) as positive iff its rating exceeds ``threshold``.

    Repeated (user, item) pairs keep their maximum rating.  Every user and
    item token seen in the stream gets a dense index in first-seen order,
    including those without positives (``filter_users`` drops them).
    """
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    best: dict[tuple[int, int], float] = {}
    for rec in ratings:
        u = users.setdefault(rec.user, len(users))
        it = items.setdefault(rec.item, len(items))
        key = (u, it)
        prev = best.get(key)
        if prev is None or rec.rating > prev:
            best[key] = rec.rating
    if not best:
        raise EmptyDatasetError("no ratings in input")
    per_user: list[list[int]] = [[] for _ in range(len(users))]
    for (u, it), rating in best.items():
        if rating > threshold:
            per_user[u].append(it)
    if not any(per_user):
        raise EmptyDatasetError(f"no positives: no rating exceeds threshold {threshold}")
    return ImplicitDataset.from_lists(
        per_user, len(items), user_tokens=list(users), item_tokens=list(items)
    )


def filter_users(ds: ImplicitDataset, min_pos: int) -> ImplicitDataset:
    """Drop users with fewer than ``min_pos`` positives, then drop items left
    without positives.  Surviving indices are compacted in their old order."""
    if min_pos < 1:
        raise ValueError("min_pos must be >= 1")
    keep_users = [i for i in range(ds.n_users) if ds.positives[i].size >= min_pos]
    if not keep_users:
        raise EmptyDatasetError(f"empty dataset: no user has >= {min_pos} positives")
    used = np.zeros(ds.n_items, dtype=bool)
    for i in keep_users:
        used[ds.positives[i]] = True
    remap = np.full(ds.n_items, -1, dtype=np.int64)
    kept_items = np.flatnonzero(used)
    remap[kept_items] = np.arange(kept_items.size)
    return ImplicitDataset.from_lists(
        [remap[ds.positives[i]] for i in keep_users],
        int(kept_items.size),
        tags=[ds.tags[i] for i in keep_users],
        user_tokens=[ds.user_tokens[i] for i in keep_users],
        item_tokens=[ds.item_tokens[j] for j in kept_items],
    )


def split(
    ds: ImplicitDataset,
    train_frac: float = 0.5,
    max_train_per_user: int = 10,
    seed: int = 0,
) -> ImplicitDataset:
    """Label each user's positives train / validation / test.

    Per user: ``floor(train_frac * J)`` positives are drawn uniformly without
    replacement as train, then capped at ``max_train_per_user``; one of the
    remaining positives becomes validation and the rest test.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    if max_train_per_user < 1:
        raise ValueError("max_train_per_user must be >= 1")
    rng = np.random.default_rng(seed)
    new_tags = []
    for i, items in enumerate(ds.positives):
        n = items.size
        n_train = min(math.floor(train_frac * n), max_train_per_user)
        if n_train < 1 or n - n_train < 2:
            raise SplitError(
                f"user {ds.user_tokens[i]!r} has {n} positives, too few for "
                "train/validation/test; filter users first"
            )
        order = rng.permutation(n)
        tags = np.full(n, TEST, dtype=np.uint8)
        tags[order[:n_train]] = TRAIN
        tags[order[n_train]] = VALIDATION
        new_tags.append(tags)
    return ImplicitDataset(
        ds.n_items,
        [p.copy() for p in ds.positives],
        new_tags,
        list(ds.user_tokens),
        list(ds.item_tokens),
    )


# ---------------------------------------------------------------------------
# binary format
#
# magic "SRDS" | u16 version | u16 flags | u32 N | u32 M
# N x (u32 len, utf-8 user token) | M x (u32 len, utf-8 item token)
# N x (u32 J, J x u32 delta-encoded item, J x u8 tag)
# All integers little-endian.

_HEADER = struct.Struct("<4sHHII")
_U32 = struct.Struct("<I")


def dumps(ds: ImplicitDataset) -> bytes:
    buf = io.BytesIO()
    flags = 1 if ds.is_split else 0
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, flags, ds.n_users, ds.n_items))
    for tok in (*ds.user_tokens, *ds.item_tokens):
        raw = tok.encode("utf-8")
        buf.write(_U32.pack(len(raw)))
        buf.write(raw)
    for items, tags in zip(ds.positives, ds.tags):
        buf.write(_U32.pack(items.size))
        deltas = np.diff(items, prepend=0).astype("<u4")
        buf.write(deltas.tobytes())
        buf.write(tags.astype(np.uint8).tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"truncated file: need {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def loads(data: bytes) -> ImplicitDataset:
    if len(data) >= 4 and bytes(data[:4]) != MAGIC:
        raise BadMagicError(f"not a dataset file (magic {bytes(data[:4])!r})")
    rd = _Reader(data)
    magic, version, _flags, n_users, n_items = _HEADER.unpack(rd.take(_HEADER.size))
    if magic != MAGIC:
        raise BadMagicError(f"not a dataset file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"dataset format version {version}, expected {FORMAT_VERSION}"
        )
    tokens = []
    for _ in range(n_users + n_items):
        n = rd.u32()
        try:
            tokens.append(bytes(rd.take(n)).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"bad token encoding: {exc}") from None
    positives, tags = [], []
    for _ in range(n_users):
        n = rd.u32()
        deltas = np.frombuffer(rd.take(4 * n), dtype="<u4").astype(np.int64)
        items = np.cumsum(deltas)
        t = np.frombuffer(rd.take(n), dtype=np.uint8).copy()
        if n and (items[-1] >= n_items or np.any(deltas[1:] == 0)):
            raise FormatError("item list is not strictly increasing within range")
        if np.any(t > UNSPLIT):
            raise FormatError("unknown split tag")
        positives.append(items)
        tags.append(t)
    if rd.pos != len(rd.data):
        raise FormatError(f"{len(rd.data) - rd.pos} trailing bytes after dataset")
    return ImplicitDataset(n_items, positives, tags, tokens[:n_users], tokens[n_users:])


def save(ds: ImplicitDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ds))


def load(path) -> ImplicitDataset:
    with open(path, "rb") as fh:
        return loads(fh.read())
