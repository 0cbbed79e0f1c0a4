import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohrcf import data
from cohrcf.errors import (
    DataError,
    EmptyMatrix,
    InvalidFoldCount,
    MalformedLine,
    OutOfRangeRating,
)

from conftest import matrix_from_dense


def write(tmp_path, text, name="u.data"):
    p = tmp_path / name
    p.write_text(text)
    return p


def random_matrix(seed, n_users=30, n_items=40, density=0.3):
    rng = np.random.default_rng(seed)
    grid = rng.integers(1, 6, size=(n_users, n_items)) * (rng.random((n_users, n_items)) < density)
    return matrix_from_dense(grid)


def test_load_single_line(tmp_path):
    m = data.load_movielens(write(tmp_path, "7\t42\t5\t881250949\n"))
    assert (m.n_users, m.n_items, m.n_ratings) == (1, 1, 1)
    assert m.dense[0, 0] == 5
    assert m.user_ids.tolist() == [7] and m.item_ids.tolist() == [42]


def test_load_compacts_ids(tmp_path):
    m = data.load_movielens(write(tmp_path, "10\t3\t4\t0\n2\t3\t1\t0\n10\t9\t2\t0\n"))
    assert m.user_ids.tolist() == [2, 10] and m.item_ids.tolist() == [3, 9]
    assert m.dense.tolist() == [[1, 0], [4, 2]]


@pytest.mark.parametrize(
    "text, exc",
    [
        ("1\t1\t6\t0\n", OutOfRangeRating),
        ("1\t1\t0\t0\n", OutOfRangeRating),
        ("1\t1\t3\n", MalformedLine),
        ("1\tx\t3\t0\n", MalformedLine),
        ("", EmptyMatrix),
    ],
)
def test_load_rejects_bad_input(tmp_path, text, exc):
    with pytest.raises(exc):
        data.load_movielens(write(tmp_path, text))


def test_load_missing_file(tmp_path):
    with pytest.raises(DataError):
        data.load_movielens(tmp_path / "nope.data")


def test_full_movielens_shape(ml100k):
    assert (ml100k.n_users, ml100k.n_items, ml100k.n_ratings) == (943, 1682, 100_000)
    assert data.sparsity_level(ml100k) == pytest.approx(100000 / (943 * 1682) * 100)
    assert data.sparsity_level(ml100k) == pytest.approx(6.305, abs=5e-4)
    # every user already has >= 20 ratings
    assert data.clean_min_ratings(ml100k, 20).equals(ml100k)


def test_clean_min_ratings():
    grid = np.zeros((3, 40), dtype=int)
    grid[0, :25] = 3
    grid[1, :19] = 4
    grid[2, :30] = 5
    m = data.clean_min_ratings(matrix_from_dense(grid), 20)
    assert m.n_users == 2 and m.n_items == 40
    assert m.user_ids.tolist() == [1, 3]
    assert m.user_counts.tolist() == [25, 30]
    with pytest.raises(EmptyMatrix):
        data.clean_min_ratings(matrix_from_dense(grid), 31)


def test_sparsity_level_extremes():
    assert data.sparsity_level(matrix_from_dense(np.full((10, 10), 3))) == 100.0
    empty = data.RatingMatrix(4, 5, [], [], [])
    assert data.sparsity_level(empty) == 0.0


def test_sparsify_counts_and_determinism(ml100k):
    assert data.sparsify(ml100k, 1.0, 0) is ml100k
    a = data.sparsify(ml100k, 0.18, 3)
    assert a.n_ratings == 18_000
    assert a.equals(data.sparsify(ml100k, 0.18, 3))
    assert not a.equals(data.sparsify(ml100k, 0.18, 4))
    with pytest.raises(ValueError):
        data.sparsify(ml100k, 0.0, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_sparsify_scales_sparsity(seed, keep):
    m = random_matrix(seed % 7)
    s = data.sparsify(m, keep, seed)
    one_rating = 100.0 / (m.n_users * m.n_items)
    assert abs(data.sparsity_level(s) - keep * data.sparsity_level(m)) <= one_rating


def test_make_folds_sizes():
    m = data.RatingMatrix(943, 2, [], [], [])
    plan = data.make_folds(m, 5, 0)
    assert sorted(len(f) for f in plan.folds) == [188, 188, 189, 189, 189]
    allu = np.concatenate(plan.folds)
    assert np.array_equal(np.sort(allu), np.arange(943))


def test_make_folds_small_and_errors():
    m = data.RatingMatrix(10, 2, [], [], [])
    plan = data.make_folds(m, 5, 1)
    assert [len(f) for f in plan.folds] == [2] * 5
    assert len(set(np.concatenate(plan.folds).tolist())) == 10
    for k in (1, 11):
        with pytest.raises(InvalidFoldCount):
            data.make_folds(m, k, 0)
    assert all(
        np.array_equal(a, b) for a, b in zip(plan.folds, data.make_folds(m, 5, 1).folds)
    )
    np.testing.assert_array_equal(plan.training_users(0), np.sort(np.concatenate(plan.folds[1:])))


def test_hide_ratings_caps():
    grid = np.zeros((3, 25), dtype=int)
    grid[0, :20] = 4
    grid[1, :4] = 2
    grid[2, :1] = 5
    m = matrix_from_dense(grid)
    masked, hidden = data.hide_ratings(m, [0, 1, 2], 10, seed=0)
    per_user = np.bincount([u for u, _, _ in hidden.entries], minlength=3)
    assert per_user.tolist() == [10, 2, 0]
    assert masked.user_counts.tolist() == [10, 2, 1]
    for u, i, r in hidden.entries:
        assert m.dense[u, i] == r and masked.dense[u, i] == 0


def test_hide_ratings_leaves_other_users_alone():
    m = random_matrix(1)
    masked, hidden = data.hide_ratings(m, [0, 3], 10, seed=2)
    others = np.setdiff1d(np.arange(m.n_users), [0, 3])
    np.testing.assert_array_equal(masked.dense[others], m.dense[others])
    assert {u for u, _, _ in hidden.entries} <= {0, 3}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_hide_then_restore_round_trips(seed, per_user):
    m = random_matrix(seed % 5)
    users = np.random.default_rng(seed).choice(m.n_users, size=8, replace=False)
    masked, hidden = data.hide_ratings(m, users, per_user, seed)
    assert len({(u, i) for u, i, _ in hidden.entries}) == len(hidden)
    assert all(1 <= r <= 5 for _, _, r in hidden.entries)
    assert data.restore(masked, hidden).equals(m)
    again, hidden2 = data.hide_ratings(m, users, per_user, seed)
    assert hidden2.entries == hidden.entries and again.equals(masked)


def test_rating_matrix_invariants():
    with pytest.raises(OutOfRangeRating):
        data.RatingMatrix(1, 1, [0], [0], [0])
    with pytest.raises(DataError):
        data.RatingMatrix(1, 1, [0], [1], [3])
    with pytest.raises(DataError):
        data.RatingMatrix(2, 2, [0, 0], [1, 1], [3, 4])
    m = data.RatingMatrix(2, 2, [1, 0], [0, 1], [3, 4])
    assert m.users.tolist() == [0, 1]  # canonical (user, item) order
    with pytest.raises(ValueError):
        m.dense[0, 0] = 1


def test_serialisation_round_trip(tmp_path):
    m = random_matrix(3)
    masked, hidden = data.hide_ratings(m, [1, 2, 5], 10, seed=9)
    data.write_ratings(masked, tmp_path / "masked.data")
    data.write_hidden(hidden, m, tmp_path / "hidden.data")
    first = (tmp_path / "hidden.data").read_text().splitlines()[0].split("\t")
    assert len(first) == 4 and first[3] == "0"
    back = data.read_hidden(tmp_path / "hidden.data", m)
    assert back.entries == hidden.entries
    reread = data.load_movielens(tmp_path / "masked.data")
    assert reread.n_ratings == masked.n_ratings
