"""Skellam Rank: pairwise learning to rank with a Skellam order probability.

For a user ``i`` and an item pair ``(j, k)`` where ``j`` is rated above ``k``,
the per-pair objective is

    L = I * exp(-(a + b)) * (a / b) ** ((a - b) / 2),   a = U_i.V_j,  b = U_w.V_k

where ``I`` is a Bessel weight computed from the mean ratings of users ``i``
and ``w`` and held constant with respect to the factors. Training runs plain
SGD over sampled pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import EmptyDatasetError, RatingDataset, user_means
from .special import DEFAULT_SERIES, BesselMode, SeriesControl, bessel_series

_logger = logging.getLogger(__name__)

PAIR_MODES = ("same-user", "cross-user")
STEP_DIRECTIONS = ("descent", "ascent")


@dataclass
class FactorModel:
    """User factors ``U`` (n_users x d) and item factors ``V`` (n_items x d)."""

    U: np.ndarray
    V: np.ndarray
    skipped_steps: int = 0

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise ValueError(f"incompatible factor shapes {self.U.shape} and {self.V.shape}")

    @property
    def d(self) -> int:
        return self.U.shape[1]

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_items(self) -> int:
        return self.V.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.U.copy(), self.V.copy(), self.skipped_steps)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.U).all() and np.isfinite(self.V).all())

    def score(self, users, items) -> np.ndarray:
        """Vectorised raw dot products for paired index arrays."""
        users = np.asarray(users)
        items = np.asarray(items)
        return np.einsum("...d,...d->...", self.U[users], self.V[items])


def init_factors(n_users: int, n_items: int, d: int, mean_rating: float,
                 rng: np.random.Generator) -> FactorModel:
    """Uniform(0, sqrt(mean_rating / d)) entries, so initial dot products are positive."""
    high = math.sqrt(max(mean_rating, 1e-12) / d)
    U = rng.uniform(0.0, high, size=(n_users, d))
    V = rng.uniform(0.0, high, size=(n_items, d))
    return FactorModel(U, V)


@dataclass(frozen=True)
class SkellamRankConfig:
    d: int = 16
    gamma: float = 0.005
    max_iter: int = 20
    users_per_iter: int = 200
    items_per_user: int = 10
    pair_mode: str = "same-user"
    step_direction: str = "descent"
    dot_clamp_min: float = 1e-3
    dot_clamp_max: float = 30.0
    bessel_mode: BesselMode = BesselMode.MODIFIED
    series: SeriesControl = field(default_factory=lambda: DEFAULT_SERIES)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bessel_mode", BesselMode.parse(self.bessel_mode))
        if self.d < 1:
            raise ValueError("d must be a positive integer")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.max_iter < 0 or self.users_per_iter < 1:
            raise ValueError("max_iter must be >= 0 and users_per_iter >= 1")
        if self.items_per_user < 2:
            raise ValueError("items_per_user must be at least 2")
        if not 0 < self.dot_clamp_min < self.dot_clamp_max:
            raise ValueError("need 0 < dot_clamp_min < dot_clamp_max")
        if self.pair_mode not in PAIR_MODES:
            raise ValueError(f"pair_mode must be one of {PAIR_MODES}")
        if self.step_direction not in STEP_DIRECTIONS:
            raise ValueError(f"step_direction must be one of {STEP_DIRECTIONS}")


@dataclass(frozen=True)
class PairTerms:
    """Intermediate quantities of the pair objective.

    ``t0``/``t1`` are the clamped dot products of the preferred and the
    less-preferred pair; ``t4 = t1**-t3``, ``t5 = exp(-(t0+t1))``,
    ``t6 = t0**t3`` and ``t7 = t5 * t6``.
    """

    t0: float
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    t7: float

    @classmethod
    def from_dots(cls, a: float, b: float, lo: float = 1e-3, hi: float = 30.0) -> "PairTerms":
        t0 = min(max(float(a), lo), hi)
        t1 = min(max(float(b), lo), hi)
        t2 = t0 - t1
        t3 = t2 / 2
        t4 = t1 ** -t3
        t5 = math.exp(-(t0 + t1))
        t6 = t0 ** t3
        return cls(t0, t1, t2, t3, t4, t5, t6, t5 * t6)


@dataclass(frozen=True)
class BesselWeight:
    value: float
    order: float
    argument: float


def pair_weight(mean_i: float, mean_w: float, mode: BesselMode = BesselMode.MODIFIED,
                ctrl: SeriesControl = DEFAULT_SERIES) -> BesselWeight:
    """Bessel weight of order ``mean_i - mean_w`` at ``2 * sqrt(mean_i * mean_w)``."""
    if not (mean_i > 0 and mean_w > 0):
        raise ValueError(f"user means must be positive, got ({mean_i!r}, {mean_w!r})")
    order = mean_i - mean_w
    arg = 2.0 * math.sqrt(mean_i * mean_w)
    return BesselWeight(bessel_series(order, arg, mode, ctrl), order, arg)


def pairwise_loss(terms: PairTerms, weight: BesselWeight) -> float:
    return weight.value * math.exp(-(terms.t0 + terms.t1) + terms.t3 * (math.log(terms.t0) - math.log(terms.t1)))


def grad_coefficients(terms: PairTerms, weight: BesselWeight) -> tuple[float, float]:
    """Partial derivatives of the pair loss w.r.t. ``t0`` and ``t1``.

    The factor gradients follow by the chain rule: dL/dU_i = dL_da * V_j,
    dL/dV_j = dL_da * U_i, dL/dU_w = dL_db * V_k, dL/dV_k = dL_db * U_w.
    """
    loss = pairwise_loss(terms, weight)
    half_log_ratio = 0.5 * (math.log(terms.t0) - math.log(terms.t1))
    dL_da = loss * (terms.t3 / terms.t0 + half_log_ratio - 1.0)
    dL_db = loss * (-terms.t3 / terms.t1 - half_log_ratio - 1.0)
    return dL_da, dL_db


def _check_index(idx: int, bound: int, what: str) -> None:
    if not 0 <= idx < bound:
        raise IndexError(f"{what} index {idx} out of range [0, {bound})")


def sgd_pair_update(model: FactorModel, i: int, w: int, j: int, k: int,
                    weight: BesselWeight, cfg: SkellamRankConfig) -> FactorModel:
    """One SGD step on the pair (i, j) > (w, k), applied in place.

    Every row update uses pre-step values, so aliased rows (``w == i`` or
    ``j == k``) receive the sum of both contributions. A step that leaves a
    non-finite entry is rolled back and counted in ``model.skipped_steps``.
    """
    _check_index(i, model.n_users, "user")
    _check_index(w, model.n_users, "user")
    _check_index(j, model.n_items, "item")
    _check_index(k, model.n_items, "item")
    U, V = model.U, model.V
    ui, uw, vj, vk = U[i].copy(), U[w].copy(), V[j].copy(), V[k].copy()

    lo, hi = cfg.dot_clamp_min, cfg.dot_clamp_max
    a, b = float(ui @ vj), float(uw @ vk)
    if not (math.isfinite(a) and math.isfinite(b)):
        model.skipped_steps += 1
        return model
    terms = PairTerms.from_dots(a, b, lo, hi)
    dL_da, dL_db = grad_coefficients(terms, weight)
    # the clamp has zero slope outside [lo, hi]
    if not lo < a < hi:
        dL_da = 0.0
    if not lo < b < hi:
        dL_db = 0.0
    step = -cfg.gamma if cfg.step_direction == "descent" else cfg.gamma

    U[i] += step * dL_da * vj
    U[w] += step * dL_db * vk
    V[j] += step * dL_da * ui
    V[k] += step * dL_db * uw

    if not (np.isfinite(U[[i, w]]).all() and np.isfinite(V[[j, k]]).all()):
        # restore in reverse so aliased rows end at their pre-step value
        V[k], V[j], U[w], U[i] = vk, vj, uw, ui
        model.skipped_steps += 1
    return model


def predict(model: FactorModel, i: int, j: int) -> float:
    _check_index(i, model.n_users, "user")
    _check_index(j, model.n_items, "item")
    return float(model.U[i] @ model.V[j])


def train(ds: RatingDataset, cfg: SkellamRankConfig = SkellamRankConfig()) -> FactorModel:
    """Fit a :class:`FactorModel` with sampled-pair Skellam Rank SGD."""
    if not len(ds):
        raise EmptyDatasetError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = init_factors(ds.n_users, ds.n_items, cfg.d, ds.global_mean, rng)

    groups = ds.by_user()
    means = user_means(ds)
    eligible = np.array([u for u in range(ds.n_users) if len(groups[u][0]) >= 2], dtype=np.int64)
    if not len(eligible):
        _logger.warning("no user has two ratings; returning the initial model")
        return model
    weights: dict[tuple[int, int], BesselWeight] = {}

    def weight_for(i: int, w: int) -> BesselWeight:
        key = (i, w)
        if key not in weights:
            weights[key] = pair_weight(means[i], means[w], cfg.bessel_mode, cfg.series)
        return weights[key]

    n_sample = min(cfg.users_per_iter, len(eligible))
    for it in range(cfg.max_iter):
        user_sample = rng.choice(eligible, size=n_sample, replace=False)
        n_updates = 0
        for i in user_sample.tolist():
            items, ratings = groups[i]
            pick = rng.choice(len(items), size=min(cfg.items_per_user, len(items)), replace=False)
            pick = pick[np.argsort(-ratings[pick], kind="stable")]
            item_list = items[pick].tolist()
            rating_list = ratings[pick].tolist()
            for a in range(len(item_list) - 1):
                for b in range(a + 1, len(item_list)):
                    if not rating_list[a] > rating_list[b]:
                        continue
                    j = item_list[a]
                    if cfg.pair_mode == "same-user":
                        w, k = i, item_list[b]
                    else:
                        w = int(user_sample[rng.integers(n_sample)])
                        w_items, w_ratings = groups[w]
                        below = np.flatnonzero(w_ratings < rating_list[a])
                        if not len(below):
                            continue
                        k = int(w_items[below[rng.integers(len(below))]])
                    sgd_pair_update(model, i, w, j, k, weight_for(i, w), cfg)
                    n_updates += 1
        _logger.debug("iteration %d: %d pair updates", it + 1, n_updates)
    if model.skipped_steps:
        _logger.warning("skipped %d non-finite steps", model.skipped_steps)
    return model
