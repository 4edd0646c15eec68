"""Simulation scenarios shared by the unit and acceptance tests."""

import numpy as np

from glrbandit.environment import gen_theta_star
from glrbandit.links import sigmoid
from glrbandit.stage1 import SteinEstimator
from glrbandit.subspace import rotate_and_vectorize, svd_split

RATE_T1 = (500, 2000, 8000)
RATE_LAMBDA_SCALE = 0.02


def gaussian_logistic_samples(theta, T1, rng):
    """Standard Gaussian design matrices with Bernoulli(sigmoid(<X, Theta>)) rewards."""
    X = rng.standard_normal((T1,) + theta.shape)
    p = sigmoid(np.einsum("nij,ij->n", X, theta))
    return X, (rng.random(T1) < p).astype(float)


def scaled_error(theta_hat, theta):
    """``min_c ||theta_hat - c theta||_F``."""
    c = np.sum(theta_hat * theta) / np.sum(theta * theta)
    return float(np.linalg.norm(theta_hat - c * theta))


def stein_rate_study(T1s=RATE_T1, n_seeds=20, d=8, lambda_scale=RATE_LAMBDA_SCALE):
    """Per-T1 arrays of (scaled error, tail error, rank of estimate) over seeds."""
    out = {}
    for T1 in T1s:
        errs, tails, ranks = [], [], []
        for seed in range(n_seeds):
            rng = np.random.default_rng([seed, T1])
            truth = gen_theta_star(d, d, 1, "random-rotated", 1.0, rng)
            X, y = gaussian_logistic_samples(truth.theta_star, T1, rng)
            est = SteinEstimator(entry_std=1.0, lambda_scale=lambda_scale, link="logistic").fit(X, y)
            errs.append(scaled_error(est.theta_hat_, truth.theta_star))
            ranks.append(int(np.sum(est.svd_.singular_values > 0)))
            rot = svd_split(est.result_, 1)
            tails.append(np.linalg.norm(rotate_and_vectorize(rot, truth.theta_star)[rot.k:]))
        out[T1] = (np.array(errs), np.array(tails), np.array(ranks))
    return out


def loglog_slope(T1s, values):
    return float(np.polyfit(np.log(T1s), np.log(values), 1)[0])


def unit_rows(rng, n, dim):
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def coverage_study(n_reps=200, dim=19, t=500, delta=0.1, n_arms=100, n_test=50):
    """Fraction of replications whose UCB bands cover every test mean simultaneously.

    Each replication runs the isotropic GLM-UCB on a logistic problem with a
    unit-norm parameter for ``t`` rounds, refits the estimate on all ``t``
    observations, and compares ``|mu(x'theta*) - mu(x'theta_hat)|`` with the
    width ``alpha_t(delta) ||x||_{M_t^{-1}}`` at ``n_test`` random unit vectors.
    """
    from glrbandit.bandit import ConfidenceConfig, ReducedGLMUCB, solve_regularized_mle
    from glrbandit.links import logistic_link

    link = logistic_link(1.0)
    covered = []
    for rep in range(n_reps):
        rng = np.random.default_rng([rep, 3])
        theta = unit_rows(rng, 1, dim)[0]
        arms = unit_rows(rng, n_arms, dim)
        cfg = ConfidenceConfig(sigma0=link.sigma0, delta=delta, S0=1.0)
        pol = ReducedGLMUCB(link, dim, cfg).initialize()
        for _ in range(t):
            i = pol.select(arms)
            pol.update(float(rng.random() < link.mu(arms[i] @ theta)))
        pol.state.theta_hat = solve_regularized_mle(pol.state, pol.penalty, link)
        X = unit_rows(rng, n_test, dim)
        gap = np.abs(link.mu(X @ theta) - link.mu(X @ pol.state.theta_hat))
        covered.append(bool(np.all(gap <= pol.confidence_width(X))))
    return float(np.mean(covered))


def rotated_policy_trace(policy_cls, seed, rounds=400, d=4, T1=300, **policy_kw):
    """Actions and per-round feasibility of a stage-2 policy on a rotated d x d logistic problem.

    The feasible set is generous (norm bounds of 50) so the estimate is never
    projected; ``feasible`` records that for every round.
    """
    from glrbandit.bandit import ConfidenceConfig, RidgePenalty, in_feasible_set
    from glrbandit.environment import gen_arms
    from glrbandit.links import logistic_link

    link = logistic_link(1.0)
    rng = np.random.default_rng([seed, 5])
    truth = gen_theta_star(d, d, 1, "random-rotated", 1.0, rng)
    arms = gen_arms(40, d, d, rng)
    X0 = arms[rng.integers(40, size=T1)]
    y0 = (rng.random(T1) < sigmoid(np.einsum("nij,ij->n", X0, truth.theta_star))).astype(float)
    rot = svd_split(truth.theta_star + 0.05 * rng.standard_normal((d, d)), 1)
    feats = rotate_and_vectorize(rot, arms)
    pen = RidgePenalty(rot.k, rot.p, 1.0, 20.0)
    cfg = ConfidenceConfig(sigma0=0.5, delta=0.05, S0=50.0, S_perp=50.0, T1=T1)
    pol = policy_cls(link, pen, cfg, **policy_kw).initialize(rotate_and_vectorize(rot, X0), y0)
    means = link.mu(feats @ rotate_and_vectorize(rot, truth.theta_star))
    chosen, feasible = [], []
    for _ in range(rounds):
        i = pol.select(feats)
        chosen.append(i)
        feasible.append(in_feasible_set(pol.state.theta_hat, rot.k, 50.0, 50.0))
        pol.update(float(rng.random() < means[i]))
    return chosen, feasible, pol
