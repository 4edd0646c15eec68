"""Seeded two-stage pipelines, the naive baseline, and their on-disk traces.

Every seed owns four independent random streams derived from
``SeedSequence(seed)``: the environment (ground truth and arm pool), stage-1
exploration, stage-2 rewards, and per-round contexts. Seeds are
``seed_base + trial`` and run in separate processes up to the worker cap
given by the ``GLRBANDIT_MAX_WORKERS`` environment variable.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bandit import (
    ConfidenceConfig,
    LowGLMUCB,
    PLowGLMUCB,
    ReducedGLMUCB,
    RidgePenalty,
    check_positive_definite,
    lambda_perp_default,
)
from .config import dump_config
from .environment import RegretTrace, RewardModel, gen_arms, gen_theta_star, reward_draw
from .exceptions import GLRBanditError
from .stage1 import LoglikEstimator, ScoreDistribution, SteinEstimator, draw_exploration_arm
from .subspace import effective_dimension, rotate_and_vectorize, s_perp_bound, svd_split

ENV_MAX_WORKERS = "GLRBANDIT_MAX_WORKERS"
CSV_HEADER = "round,instant_regret,cum_regret,chosen_arm,recomputed"
PD_CHECK_EVERY = 500


@dataclass
class SeedResult:
    seed: int
    trace: RegretTrace = None
    tail_error: float = None
    n_recomputes: int = 0
    potential: tuple = (0.0, 0.0)
    state_dim: int = 0
    k: int = 0
    S_perp: float = 0.0
    lambda_perp: float = None
    theta_hat: np.ndarray = field(default=None, repr=False)
    seconds: dict = field(default_factory=dict)
    error: str = None

    @property
    def final(self):
        return self.trace.final if self.trace is not None else float("nan")


@dataclass
class RunSummary:
    config_fingerprint: str
    algorithm: str
    seeds: list
    finals: list
    mean: float
    stderr: float
    recompute_counts: list
    tail_errors: list
    potentials: list
    failures: dict
    seconds: list
    results: list = field(default=None, repr=False)

    def to_json(self):
        """Deterministic summary document; wall-clock timing is kept out of it."""
        doc = {
            "config_fingerprint": self.config_fingerprint,
            "algorithm": self.algorithm,
            "seeds": self.seeds,
            "final_cum_regret": self.finals,
            "mean": self.mean,
            "stderr": self.stderr,
            "recompute_counts": self.recompute_counts,
            "tail_errors": self.tail_errors,
            "elliptical_potential": [list(p) for p in self.potentials],
            "failures": self.failures,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def seed_streams(seed):
    names = ("env", "explore", "bandit", "context")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))))


def fixed_pool(round_index, pool, rng):
    return pool


def fresh_pool(round_index, pool, rng):
    n, d1, d2 = pool.shape
    return gen_arms(n, d1, d2, rng)


class _PoolMeans:
    """Best mean reward of the current pool, recomputed only when the pool changes."""

    def __init__(self, model, truth):
        self.model, self.truth = model, truth
        self._pool = None

    def __call__(self, pool):
        if pool is not self._pool:
            self._pool = pool
            self._means = np.asarray(self.model.mean(self.truth, pool), dtype=np.float64)
            self._best = float(self._means.max())
        return self._best, self._means


def _resolve_sigma0(cfg, model):
    if cfg.sigma0 != "auto":
        return float(cfg.sigma0)
    return max(ConfidenceConfig.default_sigma0(model.link, cfg.S0), model.sigma0)


def sampling_distribution(cfg):
    """Gaussian exploration density whose entry scale matches unit-sphere arms."""
    return ScoreDistribution.isotropic(cfg.d1, cfg.d2, 1.0 / np.sqrt(cfg.d1 * cfg.d2))


def fit_estimator(cfg, X, y, dist):
    std = float(dist.entry_std.flat[0])
    if cfg.estimator == "stein":
        est = SteinEstimator(entry_std=std, lambda_scale=cfg.stein_lambda_scale, delta=cfg.delta,
                             link=cfg.link, S0=cfg.S0, center_response=cfg.stein_center)
    else:
        est = LoglikEstimator(link=cfg.link, lambda_scale=cfg.loglik_lambda_scale, entry_std=std,
                              delta=cfg.delta, S0=cfg.S0, step_init=cfg.loglik_step)
    return est.fit(X, y)


def estimate_subspace_source(est, r):
    """The fitted estimate, or a substitute with the same subspaces when it is degenerate.

    A penalty large enough to zero the r-th singular value leaves the rotation
    undefined (the SVD of zero returns arbitrary bases). Thresholding keeps
    singular vectors, so the Stein route falls back to its unpenalized target;
    the likelihood route is refit with the penalty halved until rank r survives.
    """
    if est.svd_.singular_values[r - 1] > 0:
        return est.result_
    if hasattr(est, "target_"):
        return est.target_
    for _ in range(30):
        est = est.set_params(lambda_scale=est.lambda_scale / 2.0).fit(est.X_fit_, est.y_fit_)
        if est.svd_.singular_values[r - 1] > 0:
            return est.result_
    raise GLRBanditError("likelihood estimate stayed below rank r after penalty reductions")


def _stage2(cfg, policy, featurize, pool, pool_fn, rngs, model, truth, best_of, trace, start):
    link = policy.link
    last_pool, feats = pool, featurize(pool)
    for t in range(start, cfg.T):
        current = pool_fn(t, pool, rngs["context"])
        if current is not last_pool:
            last_pool, feats = current, featurize(current)
        idx = policy.select(feats)
        policy.update(reward_draw(model, truth, current[idx], rngs["bandit"]))
        best, means = best_of(current)
        trace.record(best - means[idx], idx, policy.last_recomputed)
        if (t - start + 1) % PD_CHECK_EVERY == 0:
            check_positive_definite(policy.state, policy.penalty, link)


def run_pipeline(cfg, seed, pool_fn=None, fingerprint=None):
    """One seed of the configured algorithm; see :func:`run_experiment` for batches."""
    rngs = seed_streams(seed)
    if pool_fn is None:
        pool_fn = fresh_pool if cfg.contextual else fixed_pool
    model = RewardModel.make(cfg.link, cfg.S0, cfg.noise_sigma)
    link = model.link
    truth = gen_theta_star(cfg.d1, cfg.d2, cfg.r, cfg.theta_style, cfg.S0, rngs["env"])
    pool = gen_arms(cfg.n_arms, cfg.d1, cfg.d2, rngs["env"])
    best_of = _PoolMeans(model, truth)
    trace = RegretTrace(seed, fingerprint or cfg.fingerprint())
    res = SeedResult(seed, trace)
    sigma0 = _resolve_sigma0(cfg, model)
    p = cfg.d1 * cfg.d2

    if cfg.algorithm == "naive-glm-ucb":
        t0 = time.perf_counter()
        conf = ConfidenceConfig(sigma0, cfg.delta, cfg.S0, 0.0, 0, cfg.exploration_multiplier)
        policy = ReducedGLMUCB(link, p, conf, cfg.lambda0).initialize()
        _stage2(cfg, policy, _flatten, pool, pool_fn, rngs, model, truth, best_of, trace, 0)
        res.seconds = {"stage1": 0.0, "stage2": time.perf_counter() - t0}
        return _finish(res, policy, p)

    t0 = time.perf_counter()
    dist = sampling_distribution(cfg)
    X1 = np.empty((cfg.T1, cfg.d1, cfg.d2))
    y1 = np.empty(cfg.T1)
    for t in range(cfg.T1):
        current = pool_fn(t, pool, rngs["context"])
        idx, arm = draw_exploration_arm(dist, current, rngs["explore"])
        X1[t] = arm
        y1[t] = reward_draw(model, truth, arm, rngs["explore"])
        best, means = best_of(current)
        trace.record(best - means[idx], idx, False)
    if cfg.oracle_subspace:
        rotation = svd_split(truth.theta_star, cfg.r)
        S_perp = 0.0
    else:
        est = fit_estimator(cfg, X1, y1, dist)
        res.theta_hat = est.theta_hat_
        rotation = svd_split(estimate_subspace_source(est, cfg.r), cfg.r)
        # the tail block is part of a vector of norm <= S0, so S0 caps the bound
        S_perp = min(s_perp_bound(cfg.d1, cfg.d2, cfg.r, dist.M, cfg.T1, truth.D_rr, cfg.delta,
                                  cfg.s_perp_multiplier), cfg.S0)
    k = effective_dimension(cfg.d1, cfg.d2, cfg.r)
    res.k, res.S_perp = k, S_perp
    res.tail_error = float(np.linalg.norm(rotate_and_vectorize(rotation, truth.theta_star)[k:]))
    t1 = time.perf_counter()

    if cfg.algorithm == "g-ests":
        def features_from(arms):
            return rotate_and_vectorize(rotation, arms)[:, :k]
        replay = cfg.gests_replay
        conf = ConfidenceConfig(sigma0, cfg.delta, cfg.S0, 0.0, cfg.T1 if replay else 0,
                                cfg.exploration_multiplier)
        policy = ReducedGLMUCB(link, k, conf, cfg.lambda0)
        policy.initialize(*((features_from(X1), y1) if replay else ()))
    else:
        def features_from(arms):
            return rotate_and_vectorize(rotation, arms)
        lam_perp = (lambda_perp_default(link.c_mu, cfg.S0, cfg.T, k, cfg.lambda0)
                    if cfg.lambda_perp == "auto" else float(cfg.lambda_perp))
        lam_perp = max(lam_perp, cfg.lambda0)
        res.lambda_perp = lam_perp
        pen = RidgePenalty(k, p, cfg.lambda0, lam_perp)
        conf = ConfidenceConfig(sigma0, cfg.delta, cfg.S0, S_perp, cfg.T1, cfg.exploration_multiplier)
        if cfg.algorithm == "g-estt-plow":
            policy = PLowGLMUCB(link, pen, conf, cfg.C)
        else:
            policy = LowGLMUCB(link, pen, conf)
        policy.initialize(features_from(X1), y1)
    _stage2(cfg, policy, features_from, pool, pool_fn, rngs, model, truth, best_of, trace, cfg.T1)
    res.seconds = {"stage1": t1 - t0, "stage2": time.perf_counter() - t1}
    return _finish(res, policy, policy.state.dim)


def _flatten(arms):
    return arms.reshape(arms.shape[0], -1)


def _finish(res, policy, dim):
    lhs, rhs = policy.state.elliptical_potential()
    if lhs > rhs:
        raise GLRBanditError(f"elliptical potential violated: {lhs!r} > {rhs!r}")
    res.potential = (lhs, rhs)
    res.n_recomputes = policy.state.n_recomputes
    res.state_dim = dim
    return res


def run_gestt(cfg, seed=0, pool_fn=None):
    algorithm = cfg.algorithm if cfg.algorithm in ("g-estt", "g-estt-plow") else "g-estt"
    return run_pipeline(cfg.replace(algorithm=algorithm), seed, pool_fn)


def run_gests(cfg, seed=0, pool_fn=None):
    return run_pipeline(cfg.replace(algorithm="g-ests"), seed, pool_fn)


def run_baseline_naive(cfg, seed=0, pool_fn=None):
    return run_pipeline(cfg.replace(algorithm="naive-glm-ucb"), seed, pool_fn)


def run_contextual(cfg, seed=0, pool_fn=None):
    """The configured pipeline with a new arm pool every round (or ``pool_fn``'s pools)."""
    return run_pipeline(cfg.replace(contextual=True), seed, pool_fn or fresh_pool)


def format_number(x):
    return "%.10g" % x


def emit_trace(trace, path):
    """Write one seed's trace as CSV (UTF-8, LF line endings, ``%.10g`` numbers)."""
    cum = trace.cumulative
    lines = [CSV_HEADER]
    for i, (g, c, a, rc) in enumerate(zip(trace.per_round_regret, cum, trace.chosen_arm, trace.recomputed), 1):
        lines.append(f"{i},{format_number(g)},{format_number(c)},{a},{int(rc)}")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_trace(path):
    """Columns of an emitted trace as numpy arrays keyed by header name."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def summary_statistics(finals):
    """Mean and standard error of the mean (0 for a single seed)."""
    a = np.asarray(finals, dtype=np.float64)
    if a.size == 0:
        return float("nan"), float("nan")
    stderr = float(np.std(a, ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
    return float(np.mean(a)), stderr


def _run_seed(cfg, seed, fingerprint):
    try:
        return run_pipeline(cfg, seed, fingerprint=fingerprint)
    except Exception as exc:  # one failing seed must not abort the batch
        return SeedResult(seed, error=f"{type(exc).__name__}: {exc}")


def max_workers(n_tasks):
    raw = os.environ.get(ENV_MAX_WORKERS)
    cap = int(raw) if raw else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def run_seeds(cfg, seeds, workers=None):
    fp = cfg.fingerprint()
    workers = max_workers(len(seeds)) if workers is None else workers
    if workers == 1:
        return [_run_seed(cfg, s, fp) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seed, [cfg] * len(seeds), seeds, [fp] * len(seeds)))


def summarize(cfg, results):
    ok = [r for r in results if r.error is None]
    # statistics use the CSV-rounded finals so they can be recomputed from the files
    finals = [float(format_number(r.trace.cumulative[-1])) for r in ok]
    mean, stderr = summary_statistics(finals)
    return RunSummary(
        config_fingerprint=cfg.fingerprint(),
        algorithm=cfg.algorithm,
        seeds=[r.seed for r in ok],
        finals=finals,
        mean=mean,
        stderr=stderr,
        recompute_counts=[r.n_recomputes for r in ok],
        tail_errors=[r.tail_error for r in ok],
        potentials=[r.potential for r in ok],
        failures={str(r.seed): r.error for r in results if r.error is not None},
        seconds=[{"seed": r.seed, **r.seconds} for r in ok],
        results=results,
    )


def trace_filename(seed):
    return f"trace_seed{seed:05d}.csv"


def run_experiment(cfg, out_dir=None, workers=None, write=True):
    """Run ``cfg.n_seeds`` seeds and write traces, ``summary.json`` and ``timing.json``."""
    seeds = [cfg.seed_base + i for i in range(cfg.n_seeds)]
    results = run_seeds(cfg, seeds, workers)
    summary = summarize(cfg, results)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            if r.error is None:
                emit_trace(r.trace, out / trace_filename(r.seed))
        (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
        (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(summary.seconds, indent=2) + "\n", encoding="utf-8")
    return summary


def compare_estimators(cfg, out_dir=None, workers=None, write=True):
    """Regret and transformed (tail) error of the Stein and likelihood estimators."""
    base = Path(out_dir if out_dir is not None else cfg.output_dir)
    report = {"config_fingerprint": cfg.fingerprint(), "algorithm": cfg.algorithm, "estimators": {}}
    for name in ("stein", "loglik"):
        sub = cfg.replace(estimator=name)
        s = run_experiment(sub, base / name, workers, write)
        errs = np.asarray(s.tail_errors, dtype=np.float64)
        report["estimators"][name] = {
            "regret_mean": s.mean,
            "regret_stderr": s.stderr,
            "transformed_error_mean": float(errs.mean()) if errs.size else float("nan"),
            "transformed_error_median": float(np.median(errs)) if errs.size else float("nan"),
            "config_fingerprint": s.config_fingerprint,
        }
    est = report["estimators"]
    report["transformed_error_ratio"] = (est["stein"]["transformed_error_mean"]
                                         / est["loglik"]["transformed_error_mean"])
    if write:
        base.mkdir(parents=True, exist_ok=True)
        (base / "compare.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return report
