"""Rating datasets: loading, dense re-indexing, per-user statistics and splits."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
import numpy as np

_logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Base class for dataset problems."""


class EmptyDatasetError(DatasetError):
    pass


class SchemaError(DatasetError):
    pass


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Sparse (user, item, rating) triples over dense 0-based indices.

    ``user_ids[u]`` / ``item_ids[i]`` hold the external id of dense index
    ``u`` / ``i``. Subsets produced by :func:`split_train_test` keep the
    parent's index space, id tables and rating range.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_users: int
    n_items: int
    user_ids: tuple = ()
    item_ids: tuple = ()
    rating_min: float | None = None
    rating_max: float | None = None
    n_malformed: int = 0
    _by_user: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        ratings = np.asarray(self.ratings, dtype=np.float64)
        if not (len(users) == len(items) == len(ratings)):
            raise DatasetError("users, items and ratings must have equal length")
        for arr in (users, items, ratings):
            arr.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        if self.rating_min is None:
            object.__setattr__(self, "rating_min", float(ratings.min()) if len(ratings) else 0.0)
        if self.rating_max is None:
            object.__setattr__(self, "rating_max", float(ratings.max()) if len(ratings) else 0.0)
        if len(users):
            if users.min() < 0 or users.max() >= self.n_users:
                raise DatasetError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise DatasetError("item index out of range")
            if ratings.min() < self.rating_min or ratings.max() > self.rating_max:
                raise DatasetError("rating outside [rating_min, rating_max]")

    def __len__(self):
        return len(self.ratings)

    def __eq__(self, other):
        if not isinstance(other, RatingDataset):
            return NotImplemented
        return (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.rating_min == other.rating_min
            and self.rating_max == other.rating_max
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
        )

    __hash__ = None

    def triples(self):
        """Iterate over ``(user_index, item_index, rating)`` tuples."""
        return zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist())

    @property
    def global_mean(self) -> float:
        if not len(self):
            raise EmptyDatasetError("dataset has no ratings")
        return float(self.ratings.mean())

    def by_user(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-user ``(item_indices, ratings)`` arrays, in storage order."""
        if self._by_user is None:
            order = np.argsort(self.users, kind="stable")
            bounds = np.searchsorted(self.users[order], np.arange(self.n_users + 1))
            groups = []
            for u in range(self.n_users):
                sel = order[bounds[u]:bounds[u + 1]]
                groups.append((self.items[sel], self.ratings[sel]))
            object.__setattr__(self, "_by_user", groups)
        return self._by_user

    def subset(self, mask: np.ndarray) -> "RatingDataset":
        """Ratings selected by a boolean mask, sharing this dataset's index space."""
        return RatingDataset(
            self.users[mask], self.items[mask], self.ratings[mask],
            n_users=self.n_users, n_items=self.n_items,
            user_ids=self.user_ids, item_ids=self.item_ids,
            rating_min=self.rating_min, rating_max=self.rating_max,
        )


class _Builder:
    """Accumulates triples with first-appearance dense indexing."""

    def __init__(self):
        self.user_index: dict = {}
        self.item_index: dict = {}
        self.seen: set = set()
        self.users: list[int] = []
        self.items: list[int] = []
        self.ratings: list[float] = []
        self.malformed = 0

    def add(self, user, item, rating: float) -> bool:
        if not math.isfinite(rating):
            self.malformed += 1
            return False
        u = self.user_index.get(user)
        i = self.item_index.get(item)
        if u is not None and i is not None and (u, i) in self.seen:
            self.malformed += 1
            return False
        if u is None:
            u = self.user_index.setdefault(user, len(self.user_index))
        if i is None:
            i = self.item_index.setdefault(item, len(self.item_index))
        self.seen.add((u, i))
        self.users.append(u)
        self.items.append(i)
        self.ratings.append(rating)
        return True

    def build(self, path) -> RatingDataset:
        if not self.ratings:
            raise EmptyDatasetError(f"no parseable ratings in {path}")
        if self.malformed:
            _logger.warning("%s: skipped %d malformed or duplicate lines", path, self.malformed)
        ratings = np.asarray(self.ratings, dtype=np.float64)
        return RatingDataset(
            np.asarray(self.users), np.asarray(self.items), ratings,
            n_users=len(self.user_index), n_items=len(self.item_index),
            user_ids=tuple(self.user_index), item_ids=tuple(self.item_index),
            rating_min=float(ratings.min()), rating_max=float(ratings.max()),
            n_malformed=self.malformed,
        )


def load_movielens(path, sep: str = "::") -> RatingDataset:
    """Load a ``UserID::MovieID::Rating::Timestamp`` file.

    Timestamps are discarded. Lines that do not parse, and repeated
    (user, item) pairs after the first, are skipped and counted in
    ``n_malformed``. ``sep`` allows the tab-separated ``u.data`` layout of the
    100K release.
    """
    builder = _Builder()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = line.split(sep)
            if len(fields) < 3:
                builder.malformed += 1
                continue
            try:
                user, item, rating = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                builder.malformed += 1
                continue
            builder.add(user, item, rating)
    return builder.build(path)


def load_csv_ratings(path, user_col: str = "user_id", item_col: str = "item_id",
                     rating_col: str = "rating", delimiter: str = ",") -> RatingDataset:
    """Load ratings from a delimited file with a header row; other columns are ignored."""
    builder = _Builder()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        missing = [c for c in (user_col, item_col, rating_col) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        cu, ci, cr = header.index(user_col), header.index(item_col), header.index(rating_col)
        width = max(cu, ci, cr)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= width:
                builder.malformed += 1
                continue
            user, item = row[cu].strip(), row[ci].strip()
            try:
                rating = float(row[cr])
            except ValueError:
                builder.malformed += 1
                continue
            if not user or not item:
                builder.malformed += 1
                continue
            builder.add(user, item, rating)
    return builder.build(path)


def _format_rating(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(float(r))


def write_movielens(ds: RatingDataset, path, sep: str = "::") -> None:
    """Write ``ds`` using its external ids; the timestamp field is written as 0."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i, r in ds.triples():
            fh.write(f"{ds.user_ids[u]}{sep}{ds.item_ids[i]}{sep}{_format_rating(r)}{sep}0\n")


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    strategy: str = "per-user-holdout"

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction!r}")
        if self.strategy != "per-user-holdout":
            raise ValueError(f"unsupported split strategy {self.strategy!r}")


def split_train_test(ds: RatingDataset, split: SplitSpec = SplitSpec()) -> tuple[RatingDataset, RatingDataset]:
    """Per-user holdout split.

    For each user with at least two ratings, ``ceil(test_fraction * count)``
    ratings picked by a seeded shuffle go to the test set (capped so one rating
    always stays in train). Users with a single rating stay entirely in train.
    """
    rng = np.random.default_rng(split.seed)
    order = np.argsort(ds.users, kind="stable")
    bounds = np.searchsorted(ds.users[order], np.arange(ds.n_users + 1))
    test_mask = np.zeros(len(ds), dtype=bool)
    for u in range(ds.n_users):
        rows = order[bounds[u]:bounds[u + 1]]
        count = len(rows)
        if count < 2:
            continue
        n_test = min(math.ceil(split.test_fraction * count), count - 1)
        test_mask[rows[rng.permutation(count)[:n_test]]] = True
    return ds.subset(~test_mask), ds.subset(test_mask)


def user_mean(ds: RatingDataset, i: int) -> float:
    """Mean of user ``i``'s observed ratings."""
    ratings = ds.by_user()[i][1]
    if not len(ratings):
        raise EmptyDatasetError(f"user {i} has no ratings")
    return float(ratings.mean())


def user_means(ds: RatingDataset) -> np.ndarray:
    """Vector of per-user mean ratings; NaN for users without ratings."""
    sums = np.bincount(ds.users, weights=ds.ratings, minlength=ds.n_users)
    counts = np.bincount(ds.users, minlength=ds.n_users)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts
