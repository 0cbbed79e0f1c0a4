"""Rating matrix loading, cleaning, sparsification and evaluation splits.

Ratings are kept in coordinate form (parallel user/item/rating arrays sorted
by ``(user, item)``); a dense ``n_users x n_items`` view with 0 for unrated
cells is built on demand.
"""
from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field

import numpy as np

from cohrcf.errors import (
    DataError,
    EmptyMatrix,
    InvalidFoldCount,
    MalformedLine,
    OutOfRangeRating,
)

MIN_RATING = 1
MAX_RATING = 5


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    """Immutable sparse users x items rating grid.

    Attributes
    ----------
    n_users, n_items : int
        Matrix shape.
    users, items, ratings : ndarray
        Coordinates of the stored ratings, sorted by user then item.  Every
        rating is in 1..5; unrated cells are simply absent.
    user_ids, item_ids : ndarray
        Original (file) identifiers of each row / column.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_ids: np.ndarray = field(default=None)
    item_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        ratings = np.asarray(self.ratings, dtype=np.int64)
        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise DataError("users, items and ratings must be equal-length vectors")
        if ratings.size:
            if ratings.min() < MIN_RATING or ratings.max() > MAX_RATING:
                raise OutOfRangeRating("ratings must lie in 1..5")
            if users.min() < 0 or users.max() >= self.n_users:
                raise DataError("user index out of bounds")
            if items.min() < 0 or items.max() >= self.n_items:
                raise DataError("item index out of bounds")
        order = np.lexsort((items, users))
        users, items, ratings = users[order], items[order], ratings[order]
        if users.size > 1:
            dup = (np.diff(users) == 0) & (np.diff(items) == 0)
            if dup.any():
                raise DataError("duplicate (user, item) rating")
        user_ids = (
            np.arange(1, self.n_users + 1) if self.user_ids is None else np.asarray(self.user_ids)
        )
        item_ids = (
            np.arange(1, self.n_items + 1) if self.item_ids is None else np.asarray(self.item_ids)
        )
        if user_ids.size != self.n_users or item_ids.size != self.n_items:
            raise DataError("id maps do not match the matrix shape")
        for name, arr in [
            ("users", users),
            ("items", items),
            ("ratings", ratings),
            ("user_ids", user_ids),
            ("item_ids", item_ids),
        ]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_ratings(self) -> int:
        return int(self.ratings.size)

    @functools.cached_property
    def dense(self) -> np.ndarray:
        """Dense int8 grid, 0 for unrated.  Read-only."""
        grid = np.zeros((self.n_users, self.n_items), dtype=np.int8)
        grid[self.users, self.items] = self.ratings
        grid.setflags(write=False)
        return grid

    @functools.cached_property
    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def user_rows(self, user_index) -> np.ndarray:
        return self.dense[np.asarray(user_index)].astype(np.float64)

    def with_ratings(self, users, items, ratings) -> "RatingMatrix":
        """Same shape and id maps, different rating set."""
        return RatingMatrix(
            self.n_users, self.n_items, users, items, ratings, self.user_ids, self.item_ids
        )

    def equals(self, other: "RatingMatrix") -> bool:
        return (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
        )


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    seed: int

    def __len__(self):
        return len(self.folds)

    def training_users(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))


@dataclass(frozen=True)
class HiddenRatings:
    """Held-out ``(user, item, true_rating)`` triples, sorted by user then item."""

    entries: tuple
    seed: int

    def __len__(self):
        return len(self.entries)

    def as_arrays(self):
        if not self.entries:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), empty.copy()
        arr = np.asarray(self.entries, dtype=np.int64)
        return arr[:, 0], arr[:, 1], arr[:, 2]


# --------------------------------------------------------------------------
# loading and cleaning


def _parse_records(path):
    if not os.path.exists(path):
        raise DataError(f"rating file not found: {path}")
    records = []
    with open(path, encoding="ascii", errors="strict") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise MalformedLine(f"{path}:{lineno}: expected 4 tab-separated fields")
            try:
                u, i, r, _ = (int(f) for f in fields)
            except ValueError:
                raise MalformedLine(f"{path}:{lineno}: non-integer field") from None
            if not MIN_RATING <= r <= MAX_RATING:
                raise OutOfRangeRating(f"{path}:{lineno}: rating {r} outside 1..5")
            records.append((u, i, r))
    return records


def load_movielens(path) -> RatingMatrix:
    """Read a MovieLens ``u.data`` style file.

    Each non-blank line holds ``user<TAB>item<TAB>rating<TAB>timestamp``.
    Ids are compacted to 0-based indices in ascending id order; the original
    ids are kept in ``user_ids`` / ``item_ids``.  Timestamps are discarded.
    """
    records = _parse_records(path)
    if not records:
        raise EmptyMatrix(f"no ratings in {path}")
    arr = np.asarray(records, dtype=np.int64)
    user_ids, users = np.unique(arr[:, 0], return_inverse=True)
    item_ids, items = np.unique(arr[:, 1], return_inverse=True)
    return RatingMatrix(
        len(user_ids), len(item_ids), users, items, arr[:, 2], user_ids, item_ids
    )


def clean_min_ratings(m: RatingMatrix, min_count: int) -> RatingMatrix:
    """Drop users with fewer than ``min_count`` ratings; items are kept."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    keep = np.flatnonzero(m.user_counts >= min_count)
    if keep.size == 0:
        raise EmptyMatrix(f"no user has at least {min_count} ratings")
    remap = np.full(m.n_users, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    mask = remap[m.users] >= 0
    return RatingMatrix(
        int(keep.size),
        m.n_items,
        remap[m.users[mask]],
        m.items[mask],
        m.ratings[mask],
        m.user_ids[keep],
        m.item_ids,
    )


def sparsity_level(m: RatingMatrix) -> float:
    """Percentage of filled cells: ``R / (M * N) * 100``."""
    if m.n_users <= 0 or m.n_items <= 0:
        raise ValueError("matrix has no cells")
    return m.n_ratings / (m.n_users * m.n_items) * 100.0


def sparsify(m: RatingMatrix, keep_fraction: float, seed: int) -> RatingMatrix:
    """Keep ``round(keep_fraction * R)`` ratings chosen uniformly at random."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    n_keep = int(np.floor(keep_fraction * m.n_ratings + 0.5))
    if n_keep >= m.n_ratings:
        return m
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(m.n_ratings, size=n_keep, replace=False))
    return m.with_ratings(m.users[idx], m.items[idx], m.ratings[idx])


def make_folds(m: RatingMatrix, k: int, seed: int) -> FoldPlan:
    """Shuffle users and split them into ``k`` near-equal disjoint folds."""
    if k < 2 or k > m.n_users:
        raise InvalidFoldCount(f"fold count {k} must lie in [2, {m.n_users}]")
    perm = np.random.default_rng(seed).permutation(m.n_users)
    folds = tuple(np.sort(part) for part in np.array_split(perm, k))
    return FoldPlan(folds, seed)


def hide_ratings(m: RatingMatrix, test_users, per_user: int, seed: int):
    """Hold out up to ``per_user`` ratings from each test user.

    A user with ``c`` ratings loses ``min(per_user, c // 2)`` of them, so at
    least half of every profile stays visible.

    Returns
    -------
    masked : RatingMatrix
        ``m`` without the held-out entries.
    hidden : HiddenRatings
    """
    if per_user < 1:
        raise ValueError("per_user must be >= 1")
    rng = np.random.default_rng(seed)
    starts = np.searchsorted(m.users, np.arange(m.n_users + 1))
    drop = []
    for u in np.unique(np.asarray(test_users, dtype=np.int64)):
        if not 0 <= u < m.n_users:
            raise DataError(f"test user {u} not in matrix")
        lo, hi = starts[u], starts[u + 1]
        n_hide = min(per_user, (hi - lo) // 2)
        if n_hide:
            drop.append(lo + np.sort(rng.choice(hi - lo, size=n_hide, replace=False)))
    drop = np.concatenate(drop) if drop else np.zeros(0, dtype=np.int64)
    keep = np.ones(m.n_ratings, dtype=bool)
    keep[drop] = False
    entries = tuple(
        (int(m.users[j]), int(m.items[j]), int(m.ratings[j])) for j in drop
    )
    masked = m.with_ratings(m.users[keep], m.items[keep], m.ratings[keep])
    return masked, HiddenRatings(entries, seed)


def restore(masked: RatingMatrix, hidden: HiddenRatings) -> RatingMatrix:
    """Re-insert held-out entries."""
    u, i, r = hidden.as_arrays()
    return masked.with_ratings(
        np.concatenate([masked.users, u]),
        np.concatenate([masked.items, i]),
        np.concatenate([masked.ratings, r]),
    )


# --------------------------------------------------------------------------
# plain-text serialisation: same four-column layout as u.data, timestamp 0,
# original ids.


def write_ratings(m: RatingMatrix, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for u, i, r in zip(m.user_ids[m.users], m.item_ids[m.items], m.ratings):
            fh.write(f"{u}\t{i}\t{r}\t0\n")


def write_hidden(hidden: HiddenRatings, m: RatingMatrix, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for u, i, r in hidden.entries:
            fh.write(f"{m.user_ids[u]}\t{m.item_ids[i]}\t{r}\t0\n")


def read_hidden(path, m: RatingMatrix, seed: int = 0) -> HiddenRatings:
    """Parse a hidden-ratings file written by :func:`write_hidden` against ``m``."""
    user_pos = {int(v): k for k, v in enumerate(m.user_ids)}
    item_pos = {int(v): k for k, v in enumerate(m.item_ids)}
    try:
        entries = [(user_pos[u], item_pos[i], r) for u, i, r in _parse_records(path)]
    except KeyError as exc:
        raise DataError(f"{path}: id {exc.args[0]} not present in matrix") from None
    return HiddenRatings(tuple(sorted(entries)), seed)
