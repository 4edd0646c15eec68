"""Rotate matrix arms into the estimated singular bases and vectorize by blocks.

With ``X' = [U, U_perp]^T X [V, V_perp]`` the output vector concatenates the
column-major vectorizations of the blocks ``X'[:r, :r]``, ``X'[r:, :r]``,
``X'[:r, r:]`` and ``X'[r:, r:]``. The first ``k = (d1 + d2) r - r^2`` entries
carry the estimated signal; the trailing block is nearly null for the true
parameter and is either penalized (full problem) or dropped (reduced problem).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_matrix_stack, check_positive, check_probability
from .exceptions import DimensionMismatch, RankOutOfRange
from .matrix_core import SvdFactorization


def effective_dimension(d1, d2, r):
    return (d1 + d2) * r - r * r


def _complete_basis(Q):
    """Orthonormal completion of the columns of ``Q`` to a square basis."""
    full, _ = np.linalg.qr(Q, mode="complete")
    return full[:, Q.shape[1]:]


@dataclass(frozen=True)
class SubspaceRotation:
    U_hat: np.ndarray
    U_perp: np.ndarray
    V_hat: np.ndarray
    V_perp: np.ndarray
    r: int

    @property
    def d1(self):
        return self.U_hat.shape[0]

    @property
    def d2(self):
        return self.V_hat.shape[0]

    @property
    def p(self):
        return self.d1 * self.d2

    @property
    def k(self):
        return effective_dimension(self.d1, self.d2, self.r)

    @property
    def left(self):
        return np.hstack([self.U_hat, self.U_perp])

    @property
    def right(self):
        return np.hstack([self.V_hat, self.V_perp])


def svd_split(est, r):
    """Split an estimate's SVD into rank-``r`` bases and their complements.

    ``est`` may be an :class:`EstimationResult`, an :class:`SvdFactorization`
    or a plain matrix.
    """
    svd = getattr(est, "svd", est)
    if not isinstance(svd, SvdFactorization):
        svd = SvdFactorization.of(check_matrix(svd))
    d1, d2 = svd.shape
    if not (1 <= r <= min(d1, d2)):
        raise RankOutOfRange(f"rank {r} outside [1, {min(d1, d2)}]")
    U_hat = svd.U[:, :r]
    V_hat = svd.Vt[:r].T
    return SubspaceRotation(U_hat, _complete_basis(U_hat), V_hat, _complete_basis(V_hat), int(r))


def rotate_and_vectorize(rot, X):
    """Block-ordered vectorization of rotated arm(s); returns (p,) or (n, p)."""
    single = np.ndim(X) == 2
    X = check_matrix_stack(X, shape=(rot.d1, rot.d2))
    Xr = rot.left.T @ X @ rot.right
    r = rot.r
    blocks = (Xr[:, :r, :r], Xr[:, r:, :r], Xr[:, :r, r:], Xr[:, r:, r:])
    # column-major within each block
    out = np.concatenate([np.swapaxes(b, 1, 2).reshape(X.shape[0], -1) for b in blocks], axis=1)
    return out[0] if single else out


rotate_parameter = rotate_and_vectorize


def unvectorize(rot, v):
    """Inverse of :func:`rotate_and_vectorize` for full-length vectors."""
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    d1, d2, r = rot.d1, rot.d2, rot.r
    if v.shape[1] != rot.p:
        raise DimensionMismatch(f"vector length {v.shape[1]} != {rot.p}")
    n = v.shape[0]
    Xr = np.empty((n, d1, d2))
    pos = 0
    for rows, cols in ((slice(0, r), slice(0, r)), (slice(r, d1), slice(0, r)),
                       (slice(0, r), slice(r, d2)), (slice(r, d1), slice(r, d2))):
        nr = len(range(d1)[rows])
        nc = len(range(d2)[cols])
        Xr[:, rows, cols] = np.swapaxes(v[:, pos:pos + nr * nc].reshape(n, nc, nr), 1, 2)
        pos += nr * nc
    X = rot.left @ Xr @ rot.right.T
    return X[0] if single else X


def reduce_tail(v_full, k):
    """Keep the first ``k`` coordinates (the three signal blocks)."""
    v_full = np.asarray(v_full, dtype=np.float64)
    if not 0 < k < v_full.shape[-1]:
        raise RankOutOfRange(f"k={k} must satisfy 0 < k < p={v_full.shape[-1]}")
    return v_full[..., :k]


def tail_norm(v_full, k):
    return float(np.linalg.norm(np.asarray(v_full)[..., k:]))


def s_perp_bound(d1, d2, r, M, T1, D_rr, delta, multiplier=1.0):
    """Bound on the rotated parameter's tail norm after ``T1`` exploration rounds."""
    for name, v in (("d1", d1), ("d2", d2), ("r", r), ("M", M), ("T1", T1), ("D_rr", D_rr)):
        check_positive(v, name)
    check_probability(delta)
    check_positive(multiplier, "multiplier", allow_zero=True)
    return float(multiplier * (d1 + d2) * M * r / (T1 * D_rr**2) * np.log((d1 + d2) / delta))


@dataclass(frozen=True)
class RotatedProblem:
    rotation: SubspaceRotation
    S_perp: float
    arms_full: np.ndarray
    arms_reduced: np.ndarray

    @property
    def p(self):
        return self.rotation.p

    @property
    def k(self):
        return self.rotation.k


def build_rotated_problem(rot, arms, S_perp=0.0):
    if rot.k >= rot.p:
        raise RankOutOfRange(f"k={rot.k} must be below p={rot.p}; rank {rot.r} leaves no tail")
    full = rotate_and_vectorize(rot, check_matrix_stack(arms))
    return RotatedProblem(rot, float(S_perp), full, reduce_tail(full, rot.k))


class SubspaceTransformer(BaseEstimator, TransformerMixin):
    """Fit singular bases on a parameter estimate, then rotate and vectorize arms.

    Parameters
    ----------
    rank : int
        Assumed rank ``r`` of the unknown parameter matrix.
    reduce : bool
        If True, :meth:`transform` drops the trailing ``(d1-r)(d2-r)`` block
        and returns length-``k`` vectors.
    """

    def __init__(self, rank=1, reduce=False):
        self.rank = rank
        self.reduce = reduce

    def fit(self, theta_hat, y=None):
        est = theta_hat if hasattr(theta_hat, "svd") else check_matrix(theta_hat)
        self.rotation_ = svd_split(est, self.rank)
        self.p_ = self.rotation_.p
        self.k_ = self.rotation_.k
        return self

    def transform(self, X):
        check_is_fitted(self, "rotation_")
        v = rotate_and_vectorize(self.rotation_, X)
        return reduce_tail(v, self.k_) if self.reduce else v

    def inverse_transform(self, v):
        check_is_fitted(self, "rotation_")
        if self.reduce:
            v = np.asarray(v, dtype=np.float64)
            pad = np.zeros(v.shape[:-1] + (self.p_ - self.k_,))
            v = np.concatenate([v, pad], axis=-1)
        return unvectorize(self.rotation_, v)
