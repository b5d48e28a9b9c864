"""Skellam Rank: fair pairwise learning to rank built on Poisson/Skellam kernels."""

__version__ = "0.1.0"

from .baselines import (  # noqa: E402
    MfConfig,
    poissonmat_predict,
    poissonmat_scorer,
    random_recommender,
    train_classic_mf,
    train_poissonmat,
)
from .data import (  # noqa: E402
    RatingDataset,
    SplitSpec,
    load_csv_ratings,
    load_movielens,
    split_train_test,
    user_mean,
    write_movielens,
)
from .metrics import EvalReport, dme, evaluate, item_frequency, mae, top_k_lists  # noqa: E402
from .special import BesselMode, SeriesControl, bessel_series, log_gamma, poisson_pmf, skellam_pmf  # noqa: E402
from .trainer import (  # noqa: E402
    BesselWeight,
    FactorModel,
    PairTerms,
    SkellamRankConfig,
    grad_coefficients,
    pair_weight,
    pairwise_loss,
    predict,
    sgd_pair_update,
    train,
)
