"""Reference recommenders: classic matrix factorization, PoissonMat and random placement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .data import EmptyDatasetError, RatingDataset
from .trainer import FactorModel, init_factors

# dot-product guard shared with the Skellam Rank defaults
CLAMP_MIN = 1e-3
CLAMP_MAX = 30.0


@dataclass(frozen=True)
class MfConfig:
    d: int = 16
    gamma: float = 0.01
    max_iter: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be a positive integer")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


def _require_data(ds: RatingDataset) -> None:
    if not len(ds):
        raise EmptyDatasetError("cannot train on an empty dataset")


def train_classic_mf(ds: RatingDataset, cfg: MfConfig = MfConfig(), history: list | None = None) -> FactorModel:
    """Unregularised SGD on squared error, visiting ratings in a seeded shuffled order.

    If ``history`` is given, the train-set MSE after every epoch is appended to it.
    """
    _require_data(ds)
    rng = np.random.default_rng(cfg.seed)
    model = init_factors(ds.n_users, ds.n_items, cfg.d, ds.global_mean, rng)
    U, V, g = model.U, model.V, cfg.gamma
    users, items, ratings = ds.users, ds.items, ds.ratings
    for _ in range(cfg.max_iter):
        for n in rng.permutation(len(ds)).tolist():
            u, i = users[n], items[n]
            uu = U[u].copy()
            err = uu @ V[i] - ratings[n]
            U[u] -= g * err * V[i]
            V[i] -= g * err * uu
        if history is not None:
            history.append(float(np.mean((model.score(users, items) - ratings) ** 2)))
    return model


def user_rates(model: FactorModel, ds: RatingDataset) -> np.ndarray:
    """Per-user Poisson rate: mean clamped dot product over the user's observed items.

    Users without ratings get the mean over all items.
    """
    dots = np.clip(model.score(ds.users, ds.items), CLAMP_MIN, CLAMP_MAX)
    sums = np.bincount(ds.users, weights=dots, minlength=ds.n_users)
    counts = np.bincount(ds.users, minlength=ds.n_users)
    rates = np.empty(ds.n_users)
    seen = counts > 0
    rates[seen] = sums[seen] / counts[seen]
    if (~seen).any():
        fallback = np.clip(model.U[~seen] @ model.V.T, CLAMP_MIN, CLAMP_MAX).mean(axis=1)
        rates[~seen] = fallback
    return rates


def _poisson_value(x, lam):
    return np.exp(x * np.log(lam) - lam - gammaln(x + 1.0))


def poissonmat_predict(model: FactorModel, ds: RatingDataset, i: int, j: int) -> float:
    """Poisson likelihood of the clamped dot product ``x`` under the user's rate: lam^x e^-lam / Gamma(x+1)."""
    if not (0 <= i < model.n_users and 0 <= j < model.n_items):
        raise IndexError(f"index ({i}, {j}) out of range")
    lam = user_rates(model, ds)[i]
    x = min(max(float(model.U[i] @ model.V[j]), CLAMP_MIN), CLAMP_MAX)
    return float(_poisson_value(x, lam))


def poissonmat_scorer(model: FactorModel, ds: RatingDataset):
    """Vectorised PoissonMat scorer with per-user rates computed once from ``ds``."""
    rates = user_rates(model, ds)

    def score(users, items):
        users = np.asarray(users)
        x = np.clip(model.score(users, items), CLAMP_MIN, CLAMP_MAX)
        return _poisson_value(x, rates[users])

    return score


def poissonmat_rating_grad(u: np.ndarray, v: np.ndarray, lam: float, rating: float):
    """Squared error ``(p - rating)**2`` of one rating and its gradients w.r.t. ``u`` and ``v``.

    ``lam`` is held fixed. Returns ``(loss, grad_u, grad_v)``; the gradient is
    zero outside the clamp interval.
    """
    raw = float(u @ v)
    x = min(max(raw, CLAMP_MIN), CLAMP_MAX)
    p = math.exp(x * math.log(lam) - lam - math.lgamma(x + 1.0))
    resid = p - rating
    if CLAMP_MIN < raw < CLAMP_MAX:
        coef = 2.0 * resid * p * (math.log(lam) - float(digamma(x + 1.0)))
    else:
        coef = 0.0
    return resid * resid, coef * v, coef * u


def train_poissonmat(ds: RatingDataset, cfg: MfConfig = MfConfig()) -> FactorModel:
    """SGD on the squared error between the Poisson likelihood score and the rating.

    Per-user rates are refreshed at the start of each epoch and frozen within it.
    """
    _require_data(ds)
    rng = np.random.default_rng(cfg.seed)
    model = init_factors(ds.n_users, ds.n_items, cfg.d, ds.global_mean, rng)
    U, V, g = model.U, model.V, cfg.gamma
    users, items, ratings = ds.users, ds.items, ds.ratings
    for _ in range(cfg.max_iter):
        rates = user_rates(model, ds)
        log_rates = np.log(rates)
        for n in rng.permutation(len(ds)).tolist():
            u, i = users[n], items[n]
            uu = U[u].copy()
            raw = float(uu @ V[i])
            if not CLAMP_MIN < raw < CLAMP_MAX:
                continue
            p = math.exp(raw * log_rates[u] - rates[u] - math.lgamma(raw + 1.0))
            coef = 2.0 * (p - ratings[n]) * p * (log_rates[u] - float(digamma(raw + 1.0)))
            U[u] -= g * coef * V[i]
            V[i] -= g * coef * uu
    return model


_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x ^ (x >> np.uint64(31))


def random_recommender(ds: RatingDataset, seed: int = 0):
    """Random placement: a fixed pseudo-random score per (user, item), uniform on the rating range."""
    lo, hi = float(ds.rating_min), float(ds.rating_max)
    key = _splitmix64(np.array([int(seed) % (1 << 64)], dtype=np.uint64))[0]

    def score(users, items):
        users = np.asarray(users, dtype=np.uint64)
        items = np.asarray(items, dtype=np.uint64)
        with np.errstate(over="ignore"):
            h = _splitmix64(_splitmix64(key ^ users) ^ items)
        unit = (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return lo + (hi - lo) * unit

    return score
