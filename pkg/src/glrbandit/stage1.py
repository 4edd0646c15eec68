"""Stage-1 subspace exploration: sampling, Stein-type target, nuclear-norm solvers.

Two estimators are provided. :class:`SteinEstimator` builds the averaged,
spectrally truncated target ``B = mean(psi_tilde(y_i * S(X_i)))`` and returns
the exact minimizer of ``||Theta - B||_F^2 + lambda ||Theta||_*`` by singular
value thresholding. :class:`LoglikEstimator` minimizes the nuclear-norm
penalized negative log-likelihood by proximal gradient descent.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    as_generator,
    check_matrix_stack,
    check_positive,
    check_probability,
)
from .exceptions import DimensionMismatch, EmptyArmSet, EmptySampleSet, InvalidConfig, NotConverged
from .links import make_link
from .matrix_core import SvdFactorization, psi_tilde, svt


@dataclass(frozen=True)
class ScoreDistribution:
    """Centered Gaussian sampling density with independent entries."""

    entry_std: np.ndarray
    kind: str = "gaussian-centered"

    def __post_init__(self):
        std = np.asarray(self.entry_std, dtype=np.float64)
        if std.ndim != 2 or not np.all(std > 0) or not np.all(np.isfinite(std)):
            raise InvalidConfig("entry_std must be a 2-d array of positive finite values")
        object.__setattr__(self, "entry_std", std)

    @classmethod
    def isotropic(cls, d1, d2, std):
        return cls(np.full((d1, d2), float(std)))

    @property
    def shape(self):
        return self.entry_std.shape

    @property
    def M(self):
        """Bound on the second moment of every score entry, ``max 1/sigma_ij^2``."""
        return float(np.max(1.0 / self.entry_std**2))

    def score(self, X):
        return np.asarray(X, dtype=np.float64) / self.entry_std**2

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        shape = self.shape if size is None else (size,) + self.shape
        return rng.standard_normal(shape) * self.entry_std


def score(dist, X):
    """Entrywise Gaussian score ``x_ij / sigma_ij^2``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-2:] != dist.shape:
        raise DimensionMismatch(f"X has shape {X.shape[-2:]}, distribution has {dist.shape}")
    return dist.score(X)


def _check_bound_inputs(sigma0, S_f, M, T1, d1, d2, delta):
    for name, v in (("sigma0", sigma0), ("S_f", S_f), ("M", M), ("T1", T1), ("d1", d1), ("d2", d2)):
        check_positive(v, name)
    check_probability(delta)


def default_nu(sigma0, S_f, M, T1, d1, d2, delta):
    """Truncation level prescribed for the Stein estimator's error bound."""
    _check_bound_inputs(sigma0, S_f, M, T1, d1, d2, delta)
    d = d1 + d2
    return float(np.sqrt(2.0 * np.log(2.0 * d / delta) / ((4.0 * sigma0**2 + S_f**2) * M * T1 * d)))


def default_lambda_T1(sigma0, S_f, M, T1, d1, d2, delta):
    """Nuclear-norm penalty prescribed for the Stein estimator's error bound."""
    _check_bound_inputs(sigma0, S_f, M, T1, d1, d2, delta)
    d = d1 + d2
    return float(4.0 * np.sqrt(2.0 * (4.0 * sigma0**2 + S_f**2) * M * d * np.log(2.0 * d / delta) / T1))


def default_lambda_loglik(entry_std, T1, d1, d2, delta):
    """Penalty scale ``sigma * sqrt((d - log delta) / T1)`` for the likelihood route."""
    check_positive(entry_std, "entry_std")
    check_positive(T1, "T1")
    check_probability(delta)
    return float(entry_std * np.sqrt((max(d1, d2) - np.log(delta)) / T1))


@dataclass(frozen=True)
class SteinConfig:
    T1: int
    d1: int
    d2: int
    sigma0: float
    S_f: float
    M: float
    delta: float
    nu: float
    lambda_T1: float

    def __post_init__(self):
        check_positive(self.nu, "nu")
        check_positive(self.lambda_T1, "lambda_T1")
        check_probability(self.delta)

    @classmethod
    def auto(cls, T1, d1, d2, sigma0, S_f, M, delta):
        args = (sigma0, S_f, M, T1, d1, d2, delta)
        return cls(T1, d1, d2, sigma0, S_f, M, delta, default_nu(*args), default_lambda_T1(*args))


@dataclass(frozen=True)
class EstimationResult:
    """Stage-1 estimate with its SVD.

    The Stein estimate targets ``mu_star * Theta*`` for an unknown positive
    scalar ``mu_star = E[mu'(<X, Theta*>)]``; only its singular subspaces are
    used downstream.
    """

    theta_hat: np.ndarray
    svd: SvdFactorization
    scale_mu_star_note: bool = True
    n_iter: int = 0
    converged: bool = True
    objective_trace: tuple = field(default=(), repr=False)

    @classmethod
    def from_theta(cls, theta_hat, **kw):
        return cls(theta_hat, SvdFactorization.of(theta_hat), **kw)


def draw_exploration_arm(dist, arms, rng):
    """Sample ``X_rand ~ dist`` and return the index and arm closest in Frobenius norm."""
    arms = np.asarray(arms, dtype=np.float64)
    if arms.ndim == 2:
        arms = arms[None]
    if arms.shape[0] == 0:
        raise EmptyArmSet("no arms to explore")
    x_rand = dist.sample(rng)
    dist2 = np.sum((arms - x_rand) ** 2, axis=(1, 2))
    idx = int(np.argmin(dist2))
    return idx, arms[idx]


def stein_target(X, y, dist, nu):
    """Averaged truncated Stein matrix ``mean_i psi_tilde(y_i * S(X_i), nu)``.

    The Stein loss then equals ``||Theta - B||_F^2 - ||B||_F^2``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise EmptySampleSet("no stage-1 samples")
    X = check_matrix_stack(X, shape=dist.shape)
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} matrices but {y.size} responses")
    check_positive(nu, "nu")
    A = y[:, None, None] * score(dist, X)
    total = np.zeros(dist.shape)
    # chunked so the batched eigendecompositions stay memory bounded
    for start in range(0, A.shape[0], 2048):
        total += psi_tilde(A[start:start + 2048], nu).sum(axis=0)
    return total / y.size


def stein_objective(theta, B, lambda_T1):
    theta = np.asarray(theta, dtype=np.float64)
    return float(np.sum(theta * theta) - 2.0 * np.sum(B * theta)
                 + lambda_T1 * np.linalg.svd(theta, compute_uv=False).sum())


def solve_stein(B, lambda_T1):
    """Exact minimizer of ``||Theta - B||_F^2 + lambda ||Theta||_*``."""
    check_positive(lambda_T1, "lambda_T1")
    return EstimationResult.from_theta(svt(B, lambda_T1 / 2.0))


def loglik_loss(theta, X, y, link):
    """``mean_i b(<X_i, Theta>) - y_i <X_i, Theta>`` and its gradient."""
    eta = np.einsum("nij,ij->n", X, theta)
    loss = float(np.mean(link.b(eta) - y * eta))
    grad = np.einsum("n,nij->ij", link.mu(eta) - y, X) / y.size
    return loss, grad


def solve_loglik(X, y, link, lambda_T1, step_init=0.1, tol=1e-7, max_iters=5000,
                 shrink=0.5, sufficient_decrease=1e-4, theta0=None):
    """Proximal gradient with backtracking for the penalized likelihood.

    Each iteration starts from twice the last accepted step (initially
    ``step_init``) and halves it until ``F(z) <= F(theta) - c ||z - theta||^2 / eta``,
    where ``F`` is the full penalized objective. Stops when the iterate moves
    less than ``tol`` in Frobenius norm.

    Raises
    ------
    NotConverged
        If ``max_iters`` is exhausted while the last change exceeds ``10 * tol``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise EmptySampleSet("no stage-1 samples")
    X = check_matrix_stack(X)
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} matrices but {y.size} responses")
    check_positive(lambda_T1, "lambda_T1", allow_zero=True)
    link = make_link(link)

    theta = np.zeros(X.shape[1:]) if theta0 is None else np.array(theta0, dtype=np.float64)

    def penalized(th, smooth):
        return smooth + lambda_T1 * np.linalg.svd(th, compute_uv=False).sum()

    f, g = loglik_loss(theta, X, y, link)
    F = penalized(theta, f)
    trace = [F]
    step = step_init / 2.0
    change = np.inf
    for it in range(1, max_iters + 1):
        step = min(2.0 * step, 1e8)
        while True:
            z = svt(theta - step * g, step * lambda_T1)
            fz, gz = loglik_loss(z, X, y, link)
            Fz = penalized(z, fz)
            moved = float(np.sum((z - theta) ** 2))
            if Fz <= F - sufficient_decrease * moved / step or moved == 0.0:
                break
            step *= shrink
            if step < 1e-14:
                # no acceptable step: stay put, which reads as convergence
                z, fz, gz, Fz, moved = theta, f, g, F, 0.0
                break
        change = float(np.sqrt(moved))
        theta, f, g, F = z, fz, gz, Fz
        trace.append(F)
        if change < tol:
            return EstimationResult.from_theta(theta, n_iter=it, converged=True, objective_trace=tuple(trace))
    if change > 10 * tol:
        raise NotConverged(f"proximal gradient did not converge in {max_iters} iterations",
                           last_iterate=theta, residual=change)
    return EstimationResult.from_theta(theta, n_iter=max_iters, converged=False, objective_trace=tuple(trace))


class SteinEstimator(BaseEstimator):
    """Low-rank matrix estimate from Stein's identity with spectral truncation.

    Parameters
    ----------
    entry_std : float or None
        Per-entry standard deviation of the Gaussian sampling density; ``None``
        uses ``1 / max(d1, d2)``.
    nu, lambda_T1 : float or "auto"
        Truncation level and nuclear penalty; "auto" uses the values that make
        the Frobenius error bound hold with probability ``1 - delta``.
    lambda_scale : float
        Multiplier applied to the (possibly automatic) penalty.
    sigma0, S_f : float or None
        Noise sub-Gaussian parameter and reward magnitude bound; ``None``
        derives them from ``link`` and ``S0``.
    center_response : bool
        Subtract the sample mean of ``y`` before forming the target. This
        cancels the ``mean(y) * mean(S(X))`` bias left when the explored arms
        come from a finite pool whose scores do not average to zero.
    """

    def __init__(self, entry_std=None, nu="auto", lambda_T1="auto", lambda_scale=1.0,
                 delta=0.01, sigma0=None, S_f=None, link="logistic", S0=1.0,
                 center_response=False):
        self.entry_std = entry_std
        self.nu = nu
        self.lambda_T1 = lambda_T1
        self.lambda_scale = lambda_scale
        self.delta = delta
        self.sigma0 = sigma0
        self.S_f = S_f
        self.link = link
        self.S0 = S0
        self.center_response = center_response

    def _distribution(self, d1, d2):
        std = 1.0 / max(d1, d2) if self.entry_std is None else self.entry_std
        if np.ndim(std) == 0:
            return ScoreDistribution.isotropic(d1, d2, std)
        return ScoreDistribution(std)

    def fit(self, X, y):
        X = check_matrix_stack(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        n, d1, d2 = X.shape
        dist = self._distribution(d1, d2)
        link = make_link(self.link, self.S0)
        sigma0 = link.sigma0 if self.sigma0 is None else self.sigma0
        S_f = abs(float(link.mu(0.0))) + link.k_mu * self.S0 if self.S_f is None else self.S_f
        cfg = SteinConfig.auto(n, d1, d2, sigma0, S_f, dist.M, self.delta)
        nu = cfg.nu if self.nu == "auto" else float(self.nu)
        lam = cfg.lambda_T1 if self.lambda_T1 == "auto" else float(self.lambda_T1)
        lam *= self.lambda_scale
        self.config_ = SteinConfig(n, d1, d2, sigma0, S_f, dist.M, self.delta, nu, lam)
        self.distribution_ = dist
        if self.center_response:
            y = y - y.mean()
        self.target_ = stein_target(X, y, dist, nu)
        self.result_ = solve_stein(self.target_, lam)
        self.theta_hat_ = self.result_.theta_hat
        self.svd_ = self.result_.svd
        self.nu_, self.lambda_T1_ = nu, lam
        return self

    def objective(self, theta):
        check_is_fitted(self, "target_")
        return stein_objective(theta, self.target_, self.lambda_T1_)


class LoglikEstimator(BaseEstimator):
    """Nuclear-norm penalized maximum likelihood estimate of the reward matrix."""

    def __init__(self, link="logistic", lambda_T1="auto", lambda_scale=1.0, entry_std=None,
                 delta=0.01, S0=1.0, step_init=0.1, tol=1e-7, max_iters=5000):
        self.link = link
        self.lambda_T1 = lambda_T1
        self.lambda_scale = lambda_scale
        self.entry_std = entry_std
        self.delta = delta
        self.S0 = S0
        self.step_init = step_init
        self.tol = tol
        self.max_iters = max_iters

    def fit(self, X, y):
        X = check_matrix_stack(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        n, d1, d2 = X.shape
        if self.lambda_T1 == "auto":
            std = 1.0 / np.sqrt(d1 * d2) if self.entry_std is None else float(self.entry_std)
            lam = default_lambda_loglik(std, n, d1, d2, self.delta)
        else:
            lam = float(self.lambda_T1)
        lam *= self.lambda_scale
        self.result_ = solve_loglik(X, y, make_link(self.link, self.S0), lam,
                                    step_init=self.step_init, tol=self.tol, max_iters=self.max_iters)
        self.theta_hat_ = self.result_.theta_hat
        self.svd_ = self.result_.svd
        self.lambda_T1_ = lam
        self.n_iter_ = self.result_.n_iter
        self.X_fit_, self.y_fit_ = X, y
        return self
