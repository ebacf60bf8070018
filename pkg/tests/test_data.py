import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setrank import data as data_io
from setrank.data import TEST, TRAIN, UNSPLIT, VALIDATION, ImplicitDataset, RawRating
from setrank.exceptions import (
    BadMagicError,
    EmptyDatasetError,
    FormatError,
    ParseError,
    SplitError,
    TruncatedFileError,
    VersionMismatchError,
)


def ratings(*triples):
    return [RawRating(u, i, float(r)) for u, i, r in triples]


def test_binarize_example():
    ds = data_io.binarize(ratings(("u1", "a", 4), ("u1", "b", 3), ("u2", "a", 5)), 3)
    assert ds.n_users == 2 and ds.n_items == 2
    a = ds.item_index["a"]
    assert [p.tolist() for p in ds.positives] == [[a], [a]]
    assert all(np.all(t == UNSPLIT) for t in ds.tags)


def test_binarize_no_positives():
    with pytest.raises(EmptyDatasetError, match="no positives"):
        data_io.binarize(ratings(("u1", "a", 3), ("u2", "b", 1)), 3)


def test_binarize_duplicates_collapse_to_one_positive():
    ds = data_io.binarize(ratings(("u", "a", 5), ("u", "a", 4), ("u", "a", 1)), 3)
    assert ds.n_positives == 1


def test_binarize_first_seen_order():
    ds = data_io.binarize(ratings(("x", "q", 5), ("y", "p", 5), ("x", "p", 4)), 3)
    assert ds.user_tokens == ["x", "y"]
    assert ds.item_tokens == ["q", "p"]


def test_read_ratings_parses_and_reports_line_numbers():
    lines = ["u1\ti1\t4\t100", "", "u2\ti2\t2.5"]
    recs = list(data_io.read_ratings(lines))
    assert recs == [RawRating("u1", "i1", 4.0, 100), RawRating("u2", "i2", 2.5, None)]
    with pytest.raises(ParseError) as err:
        list(data_io.read_ratings(["u\ti\t5", "u\ti\tfive"]))
    assert err.value.lineno == 2
    with pytest.raises(ParseError):
        list(data_io.read_ratings(["only\ttwo"]))


def test_read_ratings_comma_delimiter():
    recs = list(data_io.read_ratings(["u,i,4"], delimiter="comma"))
    assert recs[0].rating == 4.0


def _with_counts(counts):
    return ImplicitDataset.from_lists([range(c) for c in counts], max(counts))


def test_filter_users_threshold():
    ds = data_io.filter_users(_with_counts([5, 60, 61]), 60)
    assert ds.n_users == 2
    assert ds.n_items == 61


def test_filter_users_identity_and_empty():
    ds = _with_counts([1, 3, 2])
    assert data_io.filter_users(ds, 1) == ds
    with pytest.raises(EmptyDatasetError):
        data_io.filter_users(ds, 10)


def test_filter_compacts_items():
    ds = ImplicitDataset.from_lists([[0, 5], [2, 3, 4]], 6, item_tokens=list("abcdef"))
    out = data_io.filter_users(ds, 3)
    assert out.n_items == 3
    assert out.item_tokens == ["c", "d", "e"]
    assert out.positives[0].tolist() == [0, 1, 2]


@pytest.mark.parametrize("J, n_train, n_test", [(20, 10, 9), (40, 10, 29), (7, 3, 3), (3, 1, 1)])
def test_split_counts(J, n_train, n_test):
    ds = data_io.split(_with_counts([J]), 0.5, 10, seed=1)
    assert ds.is_split
    assert ds.count(TRAIN) == n_train
    assert ds.count(VALIDATION) == 1
    assert ds.count(TEST) == n_test


def test_split_deterministic_and_seed_sensitive():
    ds = _with_counts([20] * 10)
    a = data_io.split(ds, seed=3)
    b = data_io.split(ds, seed=3)
    c = data_io.split(ds, seed=4)
    assert a == b
    assert a != c


def test_split_too_few_positives_names_user():
    ds = ImplicitDataset.from_lists([[0, 1, 2], [0, 1]], 3, user_tokens=["alice", "bob"])
    with pytest.raises(SplitError, match="bob"):
        data_io.split(ds)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(3, 60), min_size=1, max_size=8), st.integers(0, 2**31))
def test_split_is_a_partition(counts, seed):
    ds = _with_counts(counts)
    out = data_io.split(ds, 0.5, 10, seed=seed)
    for i, J in enumerate(counts):
        tr, va, te = out.items(i, TRAIN), out.items(i, VALIDATION), out.items(i, TEST)
        assert tr.size == min(J // 2, 10)
        assert va.size == 1
        assert np.array_equal(np.sort(np.concatenate([tr, va, te])), np.arange(J))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.lists(st.integers(0, 29), max_size=10, unique=True), min_size=1, max_size=6),
    st.booleans(),
)
def test_format_round_trip(lists, with_tags):
    tags = [[(k % 3) for k in range(len(l))] for l in lists] if with_tags else None
    tokens = [f"usér{i}" for i in range(len(lists))]
    ds = ImplicitDataset.from_lists(lists, 30, tags=tags, user_tokens=tokens)
    assert data_io.loads(data_io.dumps(ds)) == ds


def test_format_errors_are_distinct():
    ds = data_io.split(_with_counts([6, 8]), seed=0)
    raw = data_io.dumps(ds)
    with pytest.raises(TruncatedFileError) as e1:
        data_io.loads(raw[:-3])
    with pytest.raises(BadMagicError) as e2:
        data_io.loads(b"XXXX" + raw[4:])
    bumped = bytearray(raw)
    bumped[4] = 9
    with pytest.raises(VersionMismatchError) as e3:
        data_io.loads(bytes(bumped))
    with pytest.raises(FormatError):
        data_io.loads(raw + b"\0")
    codes = {e1.value.code, e2.value.code, e3.value.code}
    assert len(codes) == 3


def test_save_load_file(tmp_path):
    ds = data_io.split(_with_counts([6, 8, 9]), seed=0)
    path = tmp_path / "ds.srds"
    data_io.save(ds, path)
    assert data_io.load(path) == ds


def test_pipeline_is_bit_identical(tmp_path):
    lines = [f"u{u}\ti{(u * 7 + k) % 23}\t{1 + (u + k) % 5}" for u in range(15) for k in range(20)]
    blobs = []
    for _ in range(2):
        ds = data_io.binarize(data_io.read_ratings(lines), 3)
        ds = data_io.split(data_io.filter_users(ds, 4), seed=11)
        blobs.append(data_io.dumps(ds))
    assert blobs[0] == blobs[1]


def test_interaction_matrix():
    ds = ImplicitDataset.from_lists([[0, 2], [1]], 3, tags=[[TRAIN, TEST], [TRAIN]])
    assert ds.interaction_matrix(TRAIN).toarray().tolist() == [[1, 0, 0], [0, 1, 0]]
    assert ds.interaction_matrix().nnz == 3


def test_from_lists_validation():
    with pytest.raises(ValueError):
        ImplicitDataset.from_lists([[0, 0]], 3)
    with pytest.raises(ValueError):
        ImplicitDataset.from_lists([[5]], 3)
