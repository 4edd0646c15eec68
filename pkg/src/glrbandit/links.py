"""Inverse link functions for canonical generalized linear reward models."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import InvalidConfig

SOFTPLUS_SPLIT = 30.0


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    """``log(1 + e^x)``, equal to ``x`` past the split point."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > SOFTPLUS_SPLIT, x, np.log1p(np.exp(np.minimum(x, SOFTPLUS_SPLIT))))


def _identity(z):
    return np.asarray(z, dtype=np.float64)


def _ones(z):
    return np.ones_like(np.asarray(z, dtype=np.float64))


def _half_square(z):
    return 0.5 * np.asarray(z, dtype=np.float64) ** 2


def _logistic_prime(x):
    s = sigmoid(x)
    return s * (1.0 - s)


@dataclass(frozen=True)
class LinkFunction:
    """Inverse link ``mu = b'`` with derivative bounds on ``[-S0, S0]``.

    ``c_mu`` is clamped to at most 1 (a smaller lower bound is always valid).
    ``phi`` is the dispersion of the exponential family; the residual is
    sub-Gaussian with parameter ``sqrt(phi * k_mu)``.
    """

    kind: str
    mu: Callable
    mu_prime: Callable
    b: Callable
    S0: float
    c_mu: float
    k_mu: float
    phi: float = 1.0

    @property
    def sigma0(self):
        return float(np.sqrt(self.phi * self.k_mu))

    def check_bounds(self, n_grid=1000):
        """True when ``c_mu <= mu'(x) <= k_mu`` on a grid over ``[-S0, S0]``."""
        grid = np.linspace(-self.S0, self.S0, n_grid)
        d = self.mu_prime(grid)
        return bool(np.all(d >= self.c_mu - 1e-12) and np.all(d <= self.k_mu + 1e-12))


def linear_link(S0=1.0, phi=1.0):
    return LinkFunction(
        kind="linear",
        mu=_identity,
        mu_prime=_ones,
        b=_half_square,
        S0=float(S0),
        c_mu=1.0,
        k_mu=1.0,
        phi=float(phi),
    )


def logistic_link(S0=1.0):
    return LinkFunction(
        kind="logistic",
        mu=sigmoid,
        mu_prime=_logistic_prime,
        b=softplus,
        S0=float(S0),
        c_mu=min(float(_logistic_prime(S0)), 1.0),
        k_mu=0.25,
        phi=1.0,
    )


def make_link(kind, S0=1.0, noise_sigma=None):
    if isinstance(kind, LinkFunction):
        return kind
    if kind == "linear":
        phi = 1.0 if noise_sigma is None else float(noise_sigma) ** 2
        return linear_link(S0, phi=phi)
    if kind == "logistic":
        return logistic_link(S0)
    raise InvalidConfig(f"unknown link {kind!r}; expected 'linear' or 'logistic'")
