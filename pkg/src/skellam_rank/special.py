"""Poisson and Skellam probability kernels and the Bessel power series.

All functions here are pure and operate on Python floats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "BesselMode",
    "SeriesControl",
    "PoleError",
    "DEFAULT_SERIES",
    "log_gamma",
    "gamma_sign",
    "poisson_pmf",
    "bessel_series",
    "skellam_pmf",
]


class PoleError(ValueError):
    """Raised when the Gamma function is evaluated at a non-positive integer."""


class BesselMode(enum.Enum):
    """Sign convention of the Bessel power series.

    ``MODIFIED`` is I_k (all terms positive), the form the Skellam PMF needs.
    ``ALTERNATING`` carries a (-1)^m factor, i.e. the ordinary J_k.
    """

    MODIFIED = "modified"
    ALTERNATING = "alternating"

    @classmethod
    def parse(cls, value: "str | BesselMode") -> "BesselMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown Bessel mode {value!r} (expected one of: {choices})") from None


@dataclass(frozen=True)
class SeriesControl:
    """Truncation rule for :func:`bessel_series`."""

    max_terms: int = 80
    tail_tolerance: float = 1e-12

    def __post_init__(self):
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError(f"max_terms must be a positive integer, got {self.max_terms!r}")
        if not self.tail_tolerance > 0:
            raise ValueError(f"tail_tolerance must be positive, got {self.tail_tolerance!r}")


DEFAULT_SERIES = SeriesControl()


def _is_pole(x: float) -> bool:
    return x <= 0 and x == math.floor(x)


def log_gamma(x: float) -> float:
    """Natural log of |Gamma(x)|.

    Raises :class:`PoleError` when ``x`` is zero or a negative integer.
    """
    x = float(x)
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at {x}")
    return math.lgamma(x)


def gamma_sign(x: float) -> int:
    """Sign of Gamma(x) for x off the poles."""
    if x > 0:
        return 1
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at {x}")
    # Gamma alternates sign between consecutive negative integers; (-1, 0) is negative.
    return -1 if math.floor(-x) % 2 == 0 else 1


def poisson_pmf(lam: float, k: int) -> float:
    """P(X = k) for X ~ Poisson(lam), evaluated in log space."""
    if not lam > 0:
        raise ValueError(f"Poisson rate must be positive, got {lam!r}")
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    return math.exp(k * math.log(lam) - lam - log_gamma(k + 1))


def _reciprocal_gamma_log(z: float) -> tuple[int, float]:
    """(sign, log|1/Gamma(z)|); sign 0 marks a pole where 1/Gamma is exactly 0."""
    if _is_pole(z):
        return 0, -math.inf
    return gamma_sign(z), -math.lgamma(z)


def bessel_series(
    order: float,
    x: float,
    mode: BesselMode = BesselMode.MODIFIED,
    ctrl: SeriesControl = DEFAULT_SERIES,
) -> float:
    """Partial sum of the Bessel power series of the first kind.

    Sums ``s^m / (Gamma(m+1) Gamma(m+order+1)) * (x/2)^(2m+order)`` with
    ``s = +1`` for :attr:`BesselMode.MODIFIED` and ``s = -1`` for
    :attr:`BesselMode.ALTERNATING`. The order may be any real number; terms
    where ``Gamma(m+order+1)`` has a pole contribute zero. Summation stops
    once ``|term| < ctrl.tail_tolerance * |partial sum|`` or after
    ``ctrl.max_terms`` terms.
    """
    order = float(order)
    x = float(x)
    mode = BesselMode.parse(mode)
    if x < 0 or math.isnan(x):
        raise ValueError(f"Bessel argument must be nonnegative, got {x!r}")
    integer_order = order == math.floor(order)
    if integer_order and order < 0:
        # I_{-n} = I_n and J_{-n} = (-1)^n J_n.
        n = -order
        value = bessel_series(n, x, mode, ctrl)
        if mode is BesselMode.ALTERNATING and int(n) % 2 == 1:
            value = -value
        return value
    if x == 0:
        if order == 0:
            return 1.0
        if order > 0:
            return 0.0
        raise ValueError(f"series diverges at x=0 for negative non-integer order {order}")

    log_half = math.log(x) - math.log(2.0)
    total = 0.0
    for m in range(ctrl.max_terms):
        sign, log_rg = _reciprocal_gamma_log(m + order + 1.0)
        if sign == 0:
            term = 0.0
        else:
            term = sign * math.exp((2 * m + order) * log_half - math.lgamma(m + 1.0) + log_rg)
            if mode is BesselMode.ALTERNATING and m % 2 == 1:
                term = -term
        total += term
        if abs(term) < ctrl.tail_tolerance * abs(total):
            break
    return total


def skellam_pmf(
    lam1: float,
    lam2: float,
    k: float,
    mode: BesselMode = BesselMode.MODIFIED,
    ctrl: SeriesControl = DEFAULT_SERIES,
) -> float:
    """P(X1 - X2 = k) for independent X1 ~ Poisson(lam1), X2 ~ Poisson(lam2).

    Only the modified mode yields a proper probability; the alternating mode
    is kept for comparison experiments.
    """
    if not (lam1 > 0 and lam2 > 0):
        raise ValueError(f"Skellam rates must be positive, got ({lam1!r}, {lam2!r})")
    bessel = bessel_series(k, 2.0 * math.sqrt(lam1 * lam2), mode, ctrl)
    return math.exp(-(lam1 + lam2) + 0.5 * k * (math.log(lam1) - math.log(lam2))) * bessel
