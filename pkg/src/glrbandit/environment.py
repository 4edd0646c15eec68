"""Synthetic low-rank GLM environments: ground truth, arm pools, rewards and regret."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_generator, check_matrix_stack, check_positive
from .exceptions import InvalidConfig, RankOutOfRange
from .links import make_link

MGF_GRID = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class GroundTruth:
    theta_star: np.ndarray
    rank: int
    D_rr: float
    S0: float

    @property
    def shape(self):
        return self.theta_star.shape

    def expected_linear(self, arms):
        """``<X, Theta*>`` for one matrix or a stack of matrices."""
        arms = np.asarray(arms, dtype=np.float64)
        return np.tensordot(arms, self.theta_star, axes=([-2, -1], [0, 1]))


def haar_orthogonal(n, rng):
    """Haar-distributed n x n orthogonal matrix (QR of a Gaussian, signs fixed by diag(R))."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def gen_theta_star(d1, d2, r, style="diagonal", S0=1.0, rng=None):
    """Rank-``r`` parameter with ``r`` equal singular values ``S0 / sqrt(r)``."""
    if not 1 <= r <= min(d1, d2):
        raise RankOutOfRange(f"rank {r} outside [1, {min(d1, d2)}]")
    check_positive(S0, "S0")
    s = S0 / np.sqrt(r)
    core = np.zeros((d1, d2))
    core[np.arange(r), np.arange(r)] = s
    if style == "diagonal":
        theta = core
    elif style == "random-rotated":
        rng = as_generator(rng)
        theta = haar_orthogonal(d1, rng) @ core @ haar_orthogonal(d2, rng).T
    else:
        raise InvalidConfig(f"unknown style {style!r}; expected 'diagonal' or 'random-rotated'")
    return GroundTruth(theta, int(r), float(s), float(S0))


def gen_arms(n_arms, d1, d2, rng):
    """``n_arms`` i.i.d. uniform points of the unit sphere in R^{d1 d2}, as matrices."""
    if n_arms < 1:
        raise InvalidConfig(f"n_arms must be >= 1, got {n_arms}")
    rng = as_generator(rng)
    g = rng.standard_normal((n_arms, d1 * d2))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g.reshape(n_arms, d1, d2)


@dataclass(frozen=True)
class RewardModel:
    """Bernoulli rewards for the logistic link, Gaussian noise for the linear link."""

    link: object
    noise_sigma: float = 0.01

    @classmethod
    def make(cls, kind, S0=1.0, noise_sigma=0.01):
        return cls(make_link(kind, S0, noise_sigma), float(noise_sigma))

    @property
    def noise(self):
        return "bernoulli" if self.link.kind == "logistic" else "gaussian"

    @property
    def sigma0(self):
        if self.link.kind == "logistic":
            return self.link.sigma0
        return float(self.noise_sigma)

    def mean(self, truth, X):
        return self.link.mu(truth.expected_linear(X))

    def draw(self, truth, X, rng):
        return reward_draw(self, truth, X, rng)


def reward_draw(model, truth, X, rng):
    """One reward (or a vector of rewards for a stack of arms)."""
    X = np.asarray(X, dtype=np.float64)
    m = model.mean(truth, X)
    if model.link.kind == "logistic":
        y = (rng.random(np.shape(m)) < m).astype(np.float64)
    elif model.noise_sigma > 0:
        y = m + model.noise_sigma * rng.standard_normal(np.shape(m))
    else:
        y = np.asarray(m, dtype=np.float64)
    return float(y) if np.ndim(y) == 0 else y


def optimal_reward(truth, arms, link):
    """Index and value of the best arm; ties go to the lowest index."""
    arms = check_matrix_stack(arms, shape=truth.shape)
    means = link.mu(truth.expected_linear(arms))
    i = int(np.argmax(means))
    return i, float(means[i])


@dataclass
class RegretTrace:
    """Per-round regret with chosen arms and stage-2 recomputation flags."""

    seed: int
    config_fingerprint: str = ""
    per_round_regret: list = field(default_factory=list)
    chosen_arm: list = field(default_factory=list)
    recomputed: list = field(default_factory=list)

    def record(self, gap, arm_index, recomputed=False):
        if gap < -1e-12:
            raise InvalidConfig(f"negative regret {gap:.3e}; arm means are inconsistent")
        self.per_round_regret.append(max(float(gap), 0.0))
        self.chosen_arm.append(int(arm_index))
        self.recomputed.append(bool(recomputed))

    @property
    def cumulative(self):
        return np.cumsum(np.asarray(self.per_round_regret, dtype=np.float64))

    @property
    def final(self):
        return float(self.cumulative[-1]) if self.per_round_regret else 0.0

    def __len__(self):
        return len(self.per_round_regret)


@dataclass(frozen=True)
class ResidualCheckReport:
    sigma0: float
    n_samples: int
    slack: float
    grid: tuple
    log_mgf: np.ndarray
    bound: np.ndarray

    @property
    def per_point(self):
        return self.log_mgf <= self.bound

    @property
    def passed(self):
        return bool(np.all(self.per_point))


def subgaussian_residual_check(model, truth, n_samples, rng, X=None, sigma0=None):
    """Empirical check of ``log E exp(l eta) <= l^2 sigma0^2 / 2`` on a fixed grid.

    Residuals are drawn at arm ``X`` (default: the matrix with the largest
    possible mean gap, ``Theta* / ||Theta*||_F``). ``sigma0`` defaults to the
    model's implied parameter.
    """
    if n_samples < 10_000:
        raise InvalidConfig(f"n_samples must be >= 10000, got {n_samples}")
    rng = as_generator(rng)
    if X is None:
        X = truth.theta_star / max(np.linalg.norm(truth.theta_star), 1e-300)
    X = np.broadcast_to(np.asarray(X, dtype=np.float64), (n_samples,) + truth.shape)
    y = reward_draw(model, truth, X, rng)
    eta = y - model.mean(truth, X)
    s0 = model.sigma0 if sigma0 is None else float(sigma0)
    lam = np.asarray(MGF_GRID)
    log_mgf = np.log(np.mean(np.exp(np.outer(lam, eta)), axis=1))
    slack = 3.0 / np.sqrt(n_samples)
    bound = lam**2 * s0**2 / 2.0 + slack
    return ResidualCheckReport(s0, int(n_samples), slack, tuple(lam), log_mgf, bound)
