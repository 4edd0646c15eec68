"""Dense matrix kernels: dilation, spectral functions, thresholding, Gram updates."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix
from .exceptions import DimensionMismatch, NegativeQuadraticForm, NonSymmetricInput

SYMMETRY_TOL = 1e-10
REFRESH_EVERY = 500


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD ``A = U @ diag(singular_values) @ Vt``."""

    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray

    @classmethod
    def of(cls, A):
        U, s, Vt = np.linalg.svd(check_matrix(A), full_matrices=False)
        return cls(U, s, Vt)

    @property
    def shape(self):
        return (self.U.shape[0], self.Vt.shape[1])

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.Vt


def hermitian_dilation(A):
    """Symmetric embedding ``[[0, A], [A.T, 0]]`` of a rectangular matrix."""
    A = check_matrix(A)
    d1, d2 = A.shape
    H = np.zeros((d1 + d2, d1 + d2))
    H[:d1, d1:] = A
    H[d1:, :d1] = A.T
    return H


def psi_scalar(x):
    """Odd logarithmic truncation ``sign(x) * log(1 + |x| + x^2 / 2)``.

    Works elementwise on arrays; returns a float for scalar input.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    out = np.sign(x) * np.log1p(a + 0.5 * a * a)
    return float(out) if out.ndim == 0 else out


def _check_symmetric(A, tol=SYMMETRY_TOL):
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise NonSymmetricInput(f"expected square matrices, got shape {A.shape}")
    dev = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    if dev > tol:
        raise NonSymmetricInput(f"max asymmetry {dev:.3e} exceeds {tol:.0e}")


def apply_spectral(A_sym, f):
    """Return ``Q f(Lambda) Q^T`` for the eigendecomposition of a symmetric matrix.

    Stacks of symmetric matrices (leading batch axis) are handled in one call.
    """
    A_sym = np.asarray(A_sym, dtype=np.float64)
    _check_symmetric(A_sym)
    w, Q = np.linalg.eigh(A_sym)
    out = (Q * f(w)[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def psi_tilde(A, nu):
    """Spectrally truncated rectangular matrix, ``psi(nu H(A))[top-right] / nu``.

    ``A`` may be a single d1 x d2 matrix or a stack of shape (n, d1, d2).
    """
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    A = np.asarray(A, dtype=np.float64)
    single = A.ndim == 2
    if single:
        A = A[None]
    n, d1, d2 = A.shape
    H = np.zeros((n, d1 + d2, d1 + d2))
    H[:, :d1, d1:] = nu * A
    H[:, d1:, :d1] = nu * np.swapaxes(A, 1, 2)
    out = apply_spectral(H, psi_scalar)[:, :d1, d1:] / nu
    return out[0] if single else out


def svt(B, tau):
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    B = check_matrix(B)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    shrunk = s - tau
    # values within rounding of the threshold are exactly removed
    shrunk[shrunk <= 16 * np.finfo(float).eps * (s[0] if s.size else 0.0)] = 0.0
    return (U * shrunk) @ Vt


def weighted_norm(x, A_inv):
    """``sqrt(x^T A_inv x)``; raises if the quadratic form is clearly negative."""
    x = np.asarray(x, dtype=np.float64)
    A_inv = np.asarray(A_inv, dtype=np.float64)
    if A_inv.shape != (x.shape[-1], x.shape[-1]):
        raise DimensionMismatch(f"vector length {x.shape[-1]} does not match matrix {A_inv.shape}")
    q = float(x @ A_inv @ x)
    if q < -1e-12:
        raise NegativeQuadraticForm(f"x^T A x = {q:.3e} < 0; matrix is not positive definite")
    return float(np.sqrt(max(q, 0.0)))


@dataclass(frozen=True)
class GramState:
    """A positive definite matrix together with its inverse and log-determinant."""

    matrix: np.ndarray
    inverse: np.ndarray
    logdet: float
    n_updates: int = 0

    @classmethod
    def from_matrix(cls, M):
        M = check_matrix(M)
        sign, logdet = np.linalg.slogdet(M)
        if sign <= 0:
            raise NegativeQuadraticForm("Gram matrix must be positive definite")
        return cls(M.copy(), np.linalg.inv(M), float(logdet), 0)

    @property
    def dim(self):
        return self.matrix.shape[0]


def gram_rank_one_update(state, x):
    """Return the state for ``M + x x^T`` using the rank-one inverse identity.

    The inverse is recomputed from scratch every ``REFRESH_EVERY`` updates to
    bound drift; the log-determinant is always accumulated incrementally so
    that ``logdet`` equals the sum of ``log(1 + x^T M^{-1} x)`` terms.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.any(x):
        return state
    u = state.inverse @ x
    w = float(x @ u)
    M = state.matrix + np.outer(x, x)
    n = state.n_updates + 1
    if n % REFRESH_EVERY == 0:
        Minv = np.linalg.inv(M)
    else:
        Minv = state.inverse - np.outer(u, u) / (1.0 + w)
    Minv = 0.5 * (Minv + Minv.T)
    return GramState(M, Minv, state.logdet + float(np.log1p(w)), n)
