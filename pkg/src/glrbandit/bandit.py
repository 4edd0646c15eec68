"""Stage-2 generalized linear UCB bandits on rotated (or reduced) arm vectors.

The estimator at round ``t`` solves ``g_t(theta) = sum_s y_s x_s`` with
``g_t(theta) = sum_s mu(x_s^T theta) x_s + Lambda theta``, summing over the
replayed stage-1 samples and every stage-2 observation so far. Exploration
widths use ``M_t = sum_s x_s x_s^T + Lambda / c_mu``.

Three step rules share one :class:`BanditState`:

* :func:`lowglm_step` re-estimates every round;
* :func:`plowglm_step` re-estimates only after ``det M_t`` grows by a factor ``C``;
* :func:`reduced_glm_ucb_step` is the isotropic k-dimensional GLM-UCB.

Selection and the Gram update happen in the step; the caller reports the
observed reward afterwards with :func:`observe`.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_positive, check_probability, check_vectors
from .exceptions import DimensionMismatch, GLRBanditError, InvalidConfig, NotConverged
from .matrix_core import REFRESH_EVERY, GramState, gram_rank_one_update


@dataclass(frozen=True)
class RidgePenalty:
    """Diagonal ridge ``diag(lambda0 * 1_k, lambda_perp * 1_{p-k})``."""

    k: int
    p: int
    lambda0: float = 1.0
    lambda_perp: float = None

    def __post_init__(self):
        if not 0 < self.k <= self.p:
            raise InvalidConfig(f"need 0 < k <= p, got k={self.k}, p={self.p}")
        check_positive(self.lambda0, "lambda0")
        if self.p > self.k:
            if self.lambda_perp is None:
                raise InvalidConfig("lambda_perp is required when p > k")
            check_positive(self.lambda_perp, "lambda_perp")
            if self.lambda_perp < self.lambda0:
                raise InvalidConfig(f"lambda_perp={self.lambda_perp} must be >= lambda0={self.lambda0}")
        else:
            object.__setattr__(self, "lambda_perp", None)

    @classmethod
    def isotropic(cls, dim, lambda0=1.0):
        return cls(dim, dim, lambda0, None)

    @property
    def diag(self):
        d = np.full(self.p, float(self.lambda0))
        if self.p > self.k:
            d[self.k:] = self.lambda_perp
        return d

    @property
    def has_tail(self):
        return self.p > self.k


@dataclass(frozen=True)
class ConfidenceConfig:
    sigma0: float
    delta: float
    S0: float = 1.0
    S_perp: float = 0.0
    T1: int = 0
    exploration_multiplier: float = 1.0

    def __post_init__(self):
        check_positive(self.sigma0, "sigma0")
        check_probability(self.delta, allow_one=True)
        check_positive(self.S0, "S0")
        check_positive(self.S_perp, "S_perp", allow_zero=True)
        check_positive(self.exploration_multiplier, "exploration_multiplier")

    @staticmethod
    def default_sigma0(link, S0):
        return link.k_mu * max(S0**2, 1.0)


def lambda_perp_default(c_mu, S0, T, k, lambda0):
    """Tail penalty ``c S0^2 T / (k log(1 + c S0^2 T / (k lambda0)))``."""
    for name, v in (("c_mu", c_mu), ("S0", S0), ("T", T), ("k", k), ("lambda0", lambda0)):
        check_positive(v, name)
    a = c_mu * S0**2 * T
    return float(a / (k * np.log1p(a / (k * lambda0))))


def alpha_t(cfg, pen, link, t):
    """Confidence radius for round index ``t`` (already offset by stage-1 rounds)."""
    check_probability(cfg.delta, allow_one=True)
    if t < 0:
        raise InvalidConfig(f"round index must be >= 0, got {t}")
    c, kmu, S0 = link.c_mu, link.k_mu, cfg.S0
    info = pen.k * np.log1p(c * S0**2 * t / (pen.k * pen.lambda0)) - 2.0 * np.log(cfg.delta)
    reg = np.sqrt(pen.lambda0) * S0
    if pen.has_tail:
        info += c * S0**2 * t / pen.lambda_perp
        reg += np.sqrt(pen.lambda_perp) * cfg.S_perp
    radius = (kmu / c) * (cfg.sigma0 * np.sqrt(max(info, 0.0)) + np.sqrt(c) * reg)
    return float(cfg.exploration_multiplier * radius)


class _Design:
    """Observed feature rows with multiplicities; repeated rows share one slot."""

    def __init__(self, p):
        self.p = p
        self._rows = np.zeros((64, p))
        self._w = np.zeros(64)
        self.n = 0
        self._index = {}

    def add(self, x, count=1.0):
        key = x.tobytes()
        i = self._index.get(key)
        if i is None:
            if self.n == self._rows.shape[0]:
                self._rows = np.vstack([self._rows, np.zeros_like(self._rows)])
                self._w = np.concatenate([self._w, np.zeros_like(self._w)])
            i = self.n
            self._rows[i] = x
            self._index[key] = i
            self.n += 1
        self._w[i] += count

    @property
    def rows(self):
        return self._rows[:self.n]

    @property
    def weights(self):
        return self._w[:self.n]

    @property
    def total(self):
        return float(self._w[:self.n].sum())


@dataclass
class BanditState:
    """Mutable per-run state of a GLM-UCB learner.

    ``widths_sq`` records ``||x_t||^2_{M_t^{-1}}`` of each chosen arm before the
    update, so ``sum(min(w, 1)) <= 2 (logdet - logdet_initial)`` can be checked.
    """

    gram: GramState
    response_accum: np.ndarray
    theta_hat: np.ndarray
    penalty_diag: np.ndarray
    design: _Design
    t: int = 0
    logdet_initial: float = 0.0
    logdet_at_last_solve: float = None
    radius_at_last_solve: float = None
    n_recomputes: int = 0
    widths_sq: list = field(default_factory=list)
    _pool: np.ndarray = field(default=None, repr=False)
    _pool_wsq: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self):
        return self.response_accum.shape[0]

    def elliptical_potential(self):
        """Return ``(sum min(w_t, 1), 2 * (logdet_now - logdet_initial))``."""
        w = np.minimum(np.asarray(self.widths_sq, dtype=np.float64), 1.0)
        return float(w.sum()), 2.0 * (self.gram.logdet - self.logdet_initial)


def init_state(pen, link, X_init=None, y_init=None):
    """State with ``M_1 = sum x x^T + Lambda / c_mu`` over the replayed samples."""
    lam = pen.diag
    M = np.diag(lam / link.c_mu)
    design = _Design(pen.p)
    resp = np.zeros(pen.p)
    if X_init is not None and len(X_init):
        X_init = check_vectors(X_init, pen.p, "replay features")
        y_init = np.asarray(y_init, dtype=np.float64).ravel()
        if y_init.size != X_init.shape[0]:
            raise DimensionMismatch("replay features and responses differ in length")
        M = M + X_init.T @ X_init
        resp = X_init.T @ y_init
        for x in X_init:
            design.add(x)
    gram = GramState.from_matrix(M)
    return BanditState(gram, resp, np.zeros(pen.p), lam, design, logdet_initial=gram.logdet)


def mle_residual(state, link, theta):
    X, w = state.design.rows, state.design.weights
    return X.T @ (w * link.mu(X @ theta)) + state.penalty_diag * theta - state.response_accum


def solve_regularized_mle(state, pen, link, theta0=None, tol=1e-6, max_iter=100):
    """Damped Newton solve of ``g_t(theta) = sum y_s x_s`` (warm started).

    The step is halved until the residual norm decreases. Convergence means
    ``||g_t(theta) - sum y_s x_s|| <= tol * (1 + ||sum y_s x_s||)``.
    """
    if pen.p != state.dim:
        raise DimensionMismatch(f"penalty dimension {pen.p} != state dimension {state.dim}")
    X, w = state.design.rows, state.design.weights
    lam = state.penalty_diag
    theta = np.array(state.theta_hat if theta0 is None else theta0, dtype=np.float64)
    target = tol * (1.0 + np.linalg.norm(state.response_accum))
    res = mle_residual(state, link, theta)
    nrm = np.linalg.norm(res)
    for _ in range(max_iter):
        if nrm <= target:
            return theta
        eta = X @ theta
        H = (X.T * (w * link.mu_prime(eta))) @ X
        H[np.diag_indices_from(H)] += lam
        direction = np.linalg.solve(H, res)
        s = 1.0
        while True:
            cand = theta - s * direction
            res_c = mle_residual(state, link, cand)
            nrm_c = np.linalg.norm(res_c)
            if nrm_c < nrm or s < 1e-10:
                break
            s *= 0.5
        theta, res, nrm = cand, res_c, nrm_c
    if nrm <= target:
        return theta
    raise NotConverged(f"regularized MLE residual {nrm:.3e} above {target:.3e}",
                       last_iterate=theta, residual=float(nrm))


def in_feasible_set(theta, k, S0, S_perp_cap):
    theta = np.asarray(theta)
    ok = np.linalg.norm(theta[:k]) <= S0 * (1 + 1e-12)
    if theta.shape[0] > k:
        ok = ok and np.linalg.norm(theta[k:]) <= S_perp_cap * (1 + 1e-12)
    return bool(ok)


def _project_balls(z, k, S0, cap):
    z = z.copy()
    for sl, radius in ((slice(0, k), S0), (slice(k, None), cap)):
        n = np.linalg.norm(z[sl])
        if n > radius:
            z[sl] *= radius / n
    return z


def project_theta(theta, k, S0, S_perp_cap, metric, n_iter=200, tol=1e-7):
    """Projection onto ``{||head|| <= S0, ||tail|| <= cap}`` in the ``metric`` norm.

    ``metric`` is a matrix or a :class:`GramState`. Solved by accelerated
    projected gradient; feasible inputs are returned unchanged.
    """
    theta = np.asarray(theta, dtype=np.float64)
    cap = max(float(S_perp_cap), 1e-6)
    if in_feasible_set(theta, k, S0, cap):
        return theta
    M = metric.matrix if isinstance(metric, GramState) else np.asarray(metric, dtype=np.float64)
    step = 1.0 / float(np.linalg.eigvalsh(M)[-1])
    z = _project_balls(theta, k, S0, cap)
    y, t_acc = z, 1.0
    for _ in range(n_iter):
        z_new = _project_balls(y - step * (M @ (y - theta)), k, S0, cap)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = z_new + ((t_acc - 1.0) / t_new) * (z_new - z)
        done = np.linalg.norm(z_new - z) < tol
        z, t_acc = z_new, t_new
        if done:
            break
    return z


def exploration_widths_sq(gram_inverse, arms):
    return np.maximum(np.einsum("ij,ij->i", arms @ gram_inverse, arms), 0.0)


def _pool_widths_sq(state, arms):
    """Squared widths of ``arms``; cached and updated in O(n p) for a fixed pool."""
    if state._pool is arms and state._pool_wsq is not None:
        return state._pool_wsq
    wsq = exploration_widths_sq(state.gram.inverse, arms)
    state._pool, state._pool_wsq = arms, wsq
    return wsq


def select_arm_ucb(state, arms, link, radius, widths_sq=None):
    """Index and value of ``argmax mu(x^T theta) + radius ||x||_{M^{-1}}``; lowest index wins ties."""
    arms = check_vectors(arms, state.dim)
    if widths_sq is None:
        widths_sq = exploration_widths_sq(state.gram.inverse, arms)
    ucb = link.mu(arms @ state.theta_hat) + radius * np.sqrt(widths_sq)
    i = int(np.argmax(ucb))
    return i, float(ucb[i])


def _update_gram(state, x):
    old_inv = state.gram.inverse
    state.gram = gram_rank_one_update(state.gram, x)
    if state._pool_wsq is None:
        return
    if state.gram.n_updates % REFRESH_EVERY == 0:
        state._pool_wsq = exploration_widths_sq(state.gram.inverse, state._pool)
    else:
        u = old_inv @ x
        proj = state._pool @ u
        state._pool_wsq = np.maximum(state._pool_wsq - proj * proj / (1.0 + x @ u), 0.0)


def _half_delta(cfg):
    return replace(cfg, delta=cfg.delta / 2.0)


def _choose(state, arms, link, radius):
    arms = check_vectors(arms, state.dim)
    wsq = _pool_widths_sq(state, arms)
    idx, _ = select_arm_ucb(state, arms, link, radius, widths_sq=wsq)
    state.widths_sq.append(float(wsq[idx]))
    _update_gram(state, arms[idx])
    state.t += 1
    return idx


def lowglm_step(state, arms, link, cfg, pen, rng=None):
    """One LowGLM-UCB round: re-estimate, select with radius ``alpha_{t+T1}(delta/2)``, update ``M``."""
    state.theta_hat = solve_regularized_mle(state, pen, link)
    state.logdet_at_last_solve = state.gram.logdet
    state.radius_at_last_solve = alpha_t(_half_delta(cfg), pen, link, state.t + 1 + cfg.T1)
    state.n_recomputes += 1
    return _choose(state, arms, link, state.radius_at_last_solve), state


def plowglm_step(state, arms, link, cfg, pen, C, rng=None):
    """One PLowGLM-UCB round; re-estimates only when ``log det M_t`` grew by ``log C``.

    Returns ``(index, state, recomputed)``.
    """
    if not C > 1.0:
        raise InvalidConfig(f"C must exceed 1, got {C}")
    recompute = (state.logdet_at_last_solve is None
                 or state.gram.logdet - state.logdet_at_last_solve > np.log(C))
    if recompute:
        theta = solve_regularized_mle(state, pen, link)
        if not in_feasible_set(theta, pen.k, cfg.S0, max(cfg.S_perp, 1e-6)):
            theta = project_theta(theta, pen.k, cfg.S0, cfg.S_perp, state.gram)
        state.theta_hat = theta
        state.logdet_at_last_solve = state.gram.logdet
        state.radius_at_last_solve = alpha_t(_half_delta(cfg), pen, link, state.t + 1 + cfg.T1)
        state.n_recomputes += 1
    return _choose(state, arms, link, state.radius_at_last_solve), state, recompute


def reduced_glm_ucb_step(state, arms_reduced, link, cfg_reduced, pen=None, rng=None):
    """One round of isotropic GLM-UCB in the reduced k-dimensional space."""
    pen = RidgePenalty.isotropic(state.dim, float(state.penalty_diag[0])) if pen is None else pen
    if pen.has_tail:
        raise InvalidConfig("reduced GLM-UCB needs an isotropic penalty without a tail block")
    return lowglm_step(state, arms_reduced, link, replace(cfg_reduced, S_perp=0.0), pen, rng)


def observe(state, x, y):
    """Record the reward of the arm chosen in the last step."""
    x = np.asarray(x, dtype=np.float64)
    state.design.add(x)
    state.response_accum = state.response_accum + float(y) * x


def check_positive_definite(state, pen, link, tol=1e-9):
    """Raise if ``lambda_min(M_t)`` fell below ``min(Lambda) / c_mu``."""
    floor = float(pen.diag.min()) / link.c_mu
    lam_min = float(np.linalg.eigvalsh(state.gram.matrix)[0])
    if lam_min < floor - tol:
        raise GLRBanditError(f"Gram matrix lost definiteness: {lam_min:.3e} < {floor:.3e}")
    return lam_min


class GLMUCBPolicy:
    """Stage-2 learner interface: ``initialize``, ``select``, ``update``.

    Subclasses fix the step rule. ``last_recomputed`` reports whether the
    most recent :meth:`select` re-estimated the parameter.
    """

    def __init__(self, link, penalty, confidence):
        self.link = link
        self.penalty = penalty
        self.confidence = confidence
        self.state = None
        self.last_recomputed = False

    def initialize(self, X_init=None, y_init=None):
        self.state = init_state(self.penalty, self.link, X_init, y_init)
        return self

    def _step(self, arms):
        return lowglm_step(self.state, arms, self.link, self.confidence, self.penalty)[0]

    def select(self, arms):
        if self.state is None:
            self.initialize()
        idx = self._step(arms)
        self._last = np.asarray(arms)[idx]
        return idx

    def update(self, y):
        observe(self.state, self._last, y)

    def radius(self):
        return self.state.radius_at_last_solve

    def confidence_width(self, x):
        """``beta = alpha ||x||_{M^{-1}}`` at the current state, for arbitrary x."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        r = alpha_t(self.confidence, self.penalty, self.link, self.state.t + self.confidence.T1)
        return r * np.sqrt(exploration_widths_sq(self.state.gram.inverse, x))


class LowGLMUCB(GLMUCBPolicy):
    name = "lowglm-ucb"

    def _step(self, arms):
        self.last_recomputed = True
        return super()._step(arms)


class PLowGLMUCB(GLMUCBPolicy):
    name = "plowglm-ucb"

    def __init__(self, link, penalty, confidence, C=2.0):
        super().__init__(link, penalty, confidence)
        if not C > 1.0:
            raise InvalidConfig(f"C must exceed 1, got {C}")
        self.C = C

    def _step(self, arms):
        idx, _, self.last_recomputed = plowglm_step(
            self.state, arms, self.link, self.confidence, self.penalty, self.C)
        return idx


class ReducedGLMUCB(GLMUCBPolicy):
    name = "glm-ucb"

    def __init__(self, link, dim, confidence, lambda0=1.0):
        super().__init__(link, RidgePenalty.isotropic(dim, lambda0), replace(confidence, S_perp=0.0))

    def _step(self, arms):
        self.last_recomputed = True
        return reduced_glm_ucb_step(self.state, arms, self.link, self.confidence, self.penalty)[0]
