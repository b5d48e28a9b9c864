"""Accuracy and popularity-bias evaluation.

Scorers throughout are vectorised callables ``score(users, items) -> ndarray``
taking equal-length index arrays.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import EmptyDatasetError, RatingDataset

_logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    pass


@dataclass
class RecommendationLists:
    lists: list  # one int array of item indices per user
    k: int = 10

    def __len__(self):
        return len(self.lists)


@dataclass
class EvalReport:
    algorithm: str
    mae: float
    dme: float
    k: int
    rank_frequency: list = field(default_factory=list)


def fit_calibration(score, train: RatingDataset) -> tuple[float, float]:
    """Least-squares affine map ``rating ~ a * score + b`` over the train set."""
    if not len(train):
        raise EmptyDatasetError("calibration needs a nonempty train set")
    x = np.asarray(score(train.users, train.items), dtype=np.float64)
    design = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(design, train.ratings, rcond=None)
    return float(a), float(b)


def mae(score, test: RatingDataset, calibration: tuple[float, float] | None = None) -> float:
    """Mean absolute error of ``a * score + b`` against the test ratings."""
    if not len(test):
        raise EmptyDatasetError("MAE needs a nonempty test set")
    pred = np.asarray(score(test.users, test.items), dtype=np.float64)
    if calibration is not None:
        a, b = calibration
        pred = a * pred + b
    return float(np.mean(np.abs(pred - test.ratings)))


def top_k_lists(score, train: RatingDataset, k: int = 10) -> RecommendationLists:
    """Top-``k`` unrated items per user, ties broken by ascending item index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    all_items = np.arange(train.n_items)
    lists = []
    for u, (rated, _) in enumerate(train.by_user()):
        s = np.asarray(score(np.full(train.n_items, u), all_items), dtype=np.float64)
        s = np.where(np.isnan(s), -np.inf, s)
        order = np.argsort(-s, kind="stable")
        keep = np.ones(train.n_items, dtype=bool)
        keep[rated] = False
        lists.append(order[keep[order]][:k])
    return RecommendationLists(lists, k)


def item_frequency(lists: RecommendationLists) -> dict[int, int]:
    """Number of user lists containing each recommended item."""
    counts = Counter()
    for items in lists.lists:
        counts.update(set(int(i) for i in items))
    return dict(counts)


def rank_frequency(freq: dict[int, int]) -> list[tuple[int, int]]:
    """``(rank, count)`` pairs for positive counts, descending; equal counts ordered by item index."""
    positive = sorted(((c, i) for i, c in freq.items() if c > 0), key=lambda ci: (-ci[0], ci[1]))
    return [(rank, c) for rank, (c, _) in enumerate(positive, start=1)]


def dme(freq: dict[int, int]) -> float:
    """Degree of Matthew Effect: |OLS slope| of log count against log rank.

    Zero-count items are dropped. A flat exposure curve scores 0; steeper
    concentration on a few items scores higher.
    """
    table = rank_frequency(freq)
    if len(table) < 2:
        raise UndefinedMetricError("DME needs at least two items with positive counts")
    ranks, counts = np.array(table, dtype=np.float64).T
    x = np.log(ranks)
    y = np.log(counts)
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    return abs(slope)


def evaluate(name: str, score, train: RatingDataset, test: RatingDataset,
             k: int = 10, calibrate: bool = True) -> EvalReport:
    """MAE on ``test`` (optionally calibrated on ``train``) and DME of the top-``k`` lists.

    DME is reported as NaN when fewer than two distinct items are recommended.
    """
    calibration = fit_calibration(score, train) if calibrate else None
    error = mae(score, test, calibration)
    freq = item_frequency(top_k_lists(score, train, k))
    try:
        fairness = dme(freq)
    except UndefinedMetricError as exc:
        _logger.warning("%s: %s; reporting DME as NaN", name, exc)
        fairness = float("nan")
    return EvalReport(name, error, fairness, k, rank_frequency(freq))
