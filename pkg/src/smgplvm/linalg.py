"""Dense float64 linear algebra: Cholesky solves, symmetric eigendecomposition and
the Woodbury / matrix-determinant-lemma fast paths for ``Phi Phi^T + sigma2 I``.

Matrices are plain ``numpy.ndarray`` objects in C (row-major) order.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NonPositiveSigma, NotPositiveDefinite, SymmetryViolation

LOG_2PI = float(np.log(2.0 * np.pi))


def as_matrix(a, name="matrix"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_finite(a, name="input"):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def check_symmetric(A, tol=1e-12):
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SymmetryViolation(f"matrix is not square: {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if A.size and float(np.max(np.abs(A - A.T))) > tol * scale:
        raise SymmetryViolation("matrix is not symmetric within tolerance")
    return A


def cholesky(A):
    """Lower Cholesky factor of an SPD matrix; raises NotPositiveDefinite."""
    try:
        return scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def cholesky_logdet_solve(A, B):
    """Return ``(log|A|, X)`` with ``A X = B`` for symmetric positive-definite ``A``."""
    A = check_symmetric(A)
    B = np.asarray(B, dtype=np.float64)
    chol = cholesky(A)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    X = scipy.linalg.cho_solve((chol, True), B, check_finite=False)
    return logdet, X


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray   # descending
    vectors: np.ndarray  # columns match ``values``


def sym_eig(A):
    A = check_symmetric(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    order = np.arange(w.size)[::-1]
    return EigenDecomposition(values=np.ascontiguousarray(w[order]),
                              vectors=np.ascontiguousarray(V[:, order]))


def _check_sigma2(sigma2):
    sigma2 = float(sigma2)
    if not sigma2 > 0.0:
        raise NonPositiveSigma(f"sigma2 must be > 0, got {sigma2}")
    return sigma2


class LowRankCov:
    """Factorisation of ``C = Phi Phi^T + sigma2 I_N`` through the R x R matrix
    ``A = sigma2 I_R + Phi^T Phi``; every operation costs O(N R^2).
    """

    def __init__(self, Phi, sigma2):
        self.Phi = as_matrix(Phi, "Phi")
        self.sigma2 = _check_sigma2(sigma2)
        N, R = self.Phi.shape
        self.N, self.R = N, R
        inner = self.Phi.T @ self.Phi
        inner[np.diag_indices_from(inner)] += self.sigma2
        self.chol = cholesky(inner)

    def logdet(self):
        # |C| = sigma2^N |I_R + Phi^T Phi / sigma2| = sigma2^(N-R) |A|
        log_a = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return (self.N - self.R) * np.log(self.sigma2) + log_a

    def solve_inner(self, B):
        return scipy.linalg.cho_solve((self.chol, True), B, check_finite=False)

    def solve(self, y):
        """``C^{-1} y`` via ``(y - Phi A^{-1} Phi^T y) / sigma2``."""
        z = self.solve_inner(self.Phi.T @ y)
        return (y - self.Phi @ z) / self.sigma2

    def trace_inv(self):
        # tr(C^-1) = (N - R + sigma2 tr(A^-1)) / sigma2
        Linv = scipy.linalg.solve_triangular(self.chol, np.eye(self.R), lower=True,
                                             check_finite=False)
        tr_ainv = float(np.sum(Linv * Linv))
        return (self.N - self.R + self.sigma2 * tr_ainv) / self.sigma2

    def inv_times_phi(self):
        """``C^{-1} Phi = Phi A^{-1}`` (push-through identity)."""
        return self.solve_inner(self.Phi.T).T


def woodbury_logdet(Phi, sigma2):
    """``log|Phi Phi^T + sigma2 I|`` in O(N R^2)."""
    return LowRankCov(Phi, sigma2).logdet()


def woodbury_quad_solve(Phi, sigma2, y):
    """Return ``(y^T C^{-1} y, C^{-1} y)`` for ``C = Phi Phi^T + sigma2 I``.

    ``y`` may be a vector or an N x M matrix; in the latter case ``quad`` holds
    one value per column.
    """
    cov = LowRankCov(Phi, sigma2)
    y = np.asarray(y, dtype=np.float64)
    cinv_y = cov.solve(y)
    quad = np.sum(y * cinv_y, axis=0)
    return (float(quad) if y.ndim == 1 else quad), cinv_y


def lowrank_loglik(Y, Phi, sigma2):
    """Sum over columns of ``log N(y_j | 0, Phi Phi^T + sigma2 I)``."""
    Y = np.asarray(Y, dtype=np.float64)
    cov = LowRankCov(Phi, sigma2)
    Ym = Y.reshape(Y.shape[0], -1)
    alpha = cov.solve(Ym)
    M = Ym.shape[1]
    return -0.5 * M * cov.N * LOG_2PI - 0.5 * M * cov.logdet() - 0.5 * float(np.sum(Ym * alpha))


def dense_gaussian_loglik(Y, C):
    """Sum over columns of ``log N(y_j | 0, C)`` through a dense Cholesky."""
    Y = np.asarray(Y, dtype=np.float64)
    Ym = Y.reshape(Y.shape[0], -1)
    logdet, alpha = cholesky_logdet_solve(C, Ym)
    N, M = Ym.shape
    return -0.5 * M * N * LOG_2PI - 0.5 * M * logdet - 0.5 * float(np.sum(Ym * alpha))
