import math

import numpy as np
import pytest

from skellam_rank.baselines import (
    MfConfig,
    poissonmat_predict,
    poissonmat_rating_grad,
    poissonmat_scorer,
    random_recommender,
    train_classic_mf,
    train_poissonmat,
)
from skellam_rank.data import EmptyDatasetError, RatingDataset
from skellam_rank.trainer import FactorModel

from conftest import synthetic_ratings


def rank_one_dataset():
    u = np.array([1.0, 1.5, 2.0])
    v = np.array([1.0, 2.0, 2.5])
    R = np.outer(u, v)
    users, items = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    return RatingDataset(users.ravel(), items.ravel(), R.ravel(), n_users=3, n_items=3)


# --- classic MF ---------------------------------------------------------------

def test_classic_mf_fits_rank_one():
    ds = rank_one_dataset()
    m = train_classic_mf(ds, MfConfig(d=1, max_iter=500, seed=0))
    train_mae = np.mean(np.abs(m.score(ds.users, ds.items) - ds.ratings))
    assert train_mae < 0.05


def test_classic_mf_mse_mostly_decreasing():
    history = []
    train_classic_mf(rank_one_dataset(), MfConfig(d=1, max_iter=500, seed=0), history=history)
    steps = np.diff(history)
    assert np.mean(steps <= 0) >= 0.9


def test_classic_mf_zero_step_returns_init():
    ds = synthetic_ratings()
    init = train_classic_mf(ds, MfConfig(max_iter=0, seed=4))
    frozen = train_classic_mf(ds, MfConfig(gamma=0.0, max_iter=3, seed=4))
    assert np.array_equal(init.U, frozen.U) and np.array_equal(init.V, frozen.V)


def test_classic_mf_deterministic():
    ds = synthetic_ratings()
    a = train_classic_mf(ds, MfConfig(max_iter=2, seed=5))
    b = train_classic_mf(ds, MfConfig(max_iter=2, seed=5))
    assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)


def test_empty_dataset_rejected():
    empty = RatingDataset([], [], [], n_users=1, n_items=1)
    for fn in (train_classic_mf, train_poissonmat):
        with pytest.raises(EmptyDatasetError):
            fn(empty)


# --- PoissonMat -----------------------------------------------------------------

def test_poissonmat_unit_dots():
    m = FactorModel(np.ones((2, 1)), np.ones((3, 1)))
    ds = RatingDataset([0, 0, 1], [0, 2, 1], [4, 3, 5], n_users=2, n_items=3)
    for i in range(2):
        for j in range(3):
            assert poissonmat_predict(m, ds, i, j) == pytest.approx(math.exp(-1), rel=1e-13)


def _fixed_rate_model(rate, x):
    # user 0 rated items 0..2 with dot products equal to ``rate``; item 3 has dot ``x``
    U = np.array([[1.0]])
    V = np.array([[rate], [rate], [rate], [x]])
    ds = RatingDataset([0, 0, 0], [0, 1, 2], [3, 3, 3], n_users=1, n_items=4)
    return FactorModel(U, V), ds


@pytest.mark.parametrize("rate", [0.7, 1.5, 3.0])
def test_poissonmat_mode_near_rate(rate):
    grid = np.linspace(0.01, 8.0, 800)
    values = []
    for x in grid:
        m, ds = _fixed_rate_model(rate, x)
        values.append(poissonmat_predict(m, ds, 0, 3))
    best = grid[int(np.argmax(values))]
    assert rate - 1.0 <= best <= rate


def test_poissonmat_tail_vanishes():
    values = [poissonmat_predict(*_fixed_rate_model(1.0, x), 0, 3) for x in (5.0, 10.0, 25.0)]
    assert values[0] > values[1] > values[2] and values[2] < 1e-20


def test_poissonmat_positive_and_finite():
    rng = np.random.default_rng(0)
    m = FactorModel(rng.normal(0, 3, (4, 3)), rng.normal(0, 3, (5, 3)))
    ds = RatingDataset([0, 1, 2, 3], [0, 1, 2, 3], [1, 2, 3, 4], n_users=4, n_items=5)
    score = poissonmat_scorer(m, ds)
    for i in range(4):
        for j in range(5):
            v = poissonmat_predict(m, ds, i, j)
            assert math.isfinite(v) and v > 0
            assert score(np.array([i]), np.array([j]))[0] == pytest.approx(v, rel=1e-12)


def test_poissonmat_index_check():
    m = FactorModel(np.ones((1, 1)), np.ones((1, 1)))
    ds = RatingDataset([0], [0], [3], n_users=1, n_items=1)
    with pytest.raises(IndexError):
        poissonmat_predict(m, ds, 1, 0)


def test_poissonmat_gradient_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    checked = 0
    while checked < 100:
        d = int(rng.integers(1, 6))
        u, v = rng.uniform(0.1, 1.5, size=(2, d))
        if not 0.05 < u @ v < 25:
            continue
        lam = rng.uniform(0.3, 6.0)
        r = float(rng.integers(1, 6))
        _, gu, gv = poissonmat_rating_grad(u, v, lam, r)
        for vec, grad, which in ((u, gu, 0), (v, gv, 1)):
            for n in range(d):
                plus, minus = vec.copy(), vec.copy()
                plus[n] += h
                minus[n] -= h
                args_p = (plus, v) if which == 0 else (u, plus)
                args_m = (minus, v) if which == 0 else (u, minus)
                fd = (poissonmat_rating_grad(*args_p, lam, r)[0] - poissonmat_rating_grad(*args_m, lam, r)[0]) / (2 * h)
                assert abs(grad[n] - fd) <= 1e-4 * max(abs(fd), 1e-8)
        checked += 1


def test_poissonmat_zero_step_and_determinism():
    ds = synthetic_ratings()
    init = train_poissonmat(ds, MfConfig(max_iter=0, seed=3))
    frozen = train_poissonmat(ds, MfConfig(gamma=0.0, max_iter=2, seed=3))
    assert np.array_equal(init.U, frozen.U) and np.array_equal(init.V, frozen.V)
    a = train_poissonmat(ds, MfConfig(max_iter=2, seed=3))
    b = train_poissonmat(ds, MfConfig(max_iter=2, seed=3))
    assert np.array_equal(a.U, b.U) and not np.array_equal(a.U, init.U)
    assert a.is_finite()


def test_poissonmat_training_reduces_loss():
    ds = synthetic_ratings()
    loss = lambda m: np.mean((poissonmat_scorer(m, ds)(ds.users, ds.items) - ds.ratings) ** 2)  # noqa: E731
    before = loss(train_poissonmat(ds, MfConfig(max_iter=0, seed=8)))
    after = loss(train_poissonmat(ds, MfConfig(max_iter=5, seed=8)))
    assert after < before


# --- random placement -----------------------------------------------------------

def test_random_deterministic_and_in_range():
    ds = synthetic_ratings()
    score = random_recommender(ds, seed=11)
    rng = np.random.default_rng(0)
    users = rng.integers(0, ds.n_users, 10_000)
    items = rng.integers(0, ds.n_items, 10_000)
    s = score(users, items)
    assert np.array_equal(s, random_recommender(ds, seed=11)(users, items))
    assert s.min() >= ds.rating_min and s.max() <= ds.rating_max
    assert score(np.array(3), np.array(4)) == score(np.array(3), np.array(4))
    # roughly uniform
    assert abs(s.mean() - 3.0) < 0.05


def test_random_seeds_differ():
    ds = synthetic_ratings()
    rng = np.random.default_rng(1)
    users = rng.integers(0, ds.n_users, 1000)
    items = rng.integers(0, ds.n_items, 1000)
    a = random_recommender(ds, 1)(users, items)
    b = random_recommender(ds, 2)(users, items)
    assert np.any(a != b)
