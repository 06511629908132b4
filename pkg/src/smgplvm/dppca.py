"""Closed-form collapse analysis for the linear-kernel GPLVM (dual probabilistic PCA).

With ``k(x, x') = x^T x'`` the marginal likelihood is
``sum_j log N(y_j | 0, X X^T + sigma2 I)``.  Its stationary points are

    X = U_Q (Lambda_Q - sigma2 I)^{1/2} R

where ``U_Q`` holds eigenvectors of the Gram matrix ``G = Y Y^T / M`` and each
diagonal entry of ``Lambda_Q`` is either the matching eigenvalue or ``sigma2``
(giving a zero column).  Where ``sigma2`` sits inside the spectrum of ``G``
decides how many columns the stable maximiser loses.
"""
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InvalidQprime, NegativeUnderRoot, NonOrthogonalR

GLOBAL_OPTIMUM = "global-optimum"
LOCAL_OPTIMUM = "local-optimum"
SADDLE = "saddle"
LOCAL_MINIMUM = "local-minimum"
OPTIMUM = "optimum"

ALL_ZERO = "all-zero"
LOCAL_MIN_CLUSTER = "local-min-cluster"
AMBIGUOUS = "ambiguous"

TIE_RTOL = 1e-10


def q_zero_columns(q):
    return f"q-zero-columns({q})"


@dataclass
class StationaryPoint:
    X_hat: np.ndarray
    retained_eigvals: np.ndarray
    kind: str


@dataclass
class DppcaReport:
    eigvals: np.ndarray
    sigma2_hat: float
    sigma2: float
    Q: int
    regime: str
    predicted_zero_cols: int

    def to_text(self):
        lines = [
            f"N: {self.eigvals.size}",
            f"Q: {self.Q}",
            f"sigma2: {self.sigma2!r}",
            f"sigma2_hat: {self.sigma2_hat!r}",
            f"regime: {self.regime}",
            f"predicted_zero_cols: {self.predicted_zero_cols}",
            f"eigvals_sum: {float(np.sum(self.eigvals))!r}",
            "eigvals: " + ",".join(repr(float(v)) for v in self.eigvals),
        ]
        return "\n".join(lines) + "\n"


def gram_matrix(Y):
    Y = linalg.as_matrix(Y, "Y")
    G = (Y @ Y.T) / Y.shape[1]
    return 0.5 * (G + G.T)


def gram_eigs(Y):
    """Descending eigenpairs of ``Y Y^T / M``."""
    return linalg.sym_eig(gram_matrix(Y))


def sigma2_mle(eigvals, Qprime, N=None):
    """Mean of the discarded eigenvalues ``lambda_{Q'+1..N}``."""
    eigvals = np.asarray(eigvals, dtype=np.float64)
    N = eigvals.size if N is None else int(N)
    if not 0 <= Qprime < N:
        raise InvalidQprime(f"need 0 <= Q' < N, got Q'={Qprime}, N={N}")
    return float(np.mean(eigvals[Qprime:N]))


def _check_orthogonal(R, Q):
    R = np.eye(Q) if R is None else np.asarray(R, dtype=np.float64)
    if R.shape != (Q, Q) or np.max(np.abs(R.T @ R - np.eye(Q))) > 1e-10:
        raise NonOrthogonalR("R must be a Q x Q orthogonal matrix")
    return R


def stationary_x(eig, retained, sigma2, R=None):
    """Stationary point from a choice of retained eigen-indices.

    ``retained`` has one entry per latent column: an index into ``eig.values``
    (0-based) or ``None`` for a sigma2-filled slot, which yields a zero column.
    """
    Q = len(retained)
    R = _check_orthogonal(R, Q)
    N = eig.values.size
    diag = np.empty(Q)
    U = np.zeros((N, Q))
    scale = np.zeros(Q)
    for k, idx in enumerate(retained):
        if idx is None:
            diag[k] = sigma2
            continue
        lam = eig.values[idx]
        if lam < sigma2:
            raise NegativeUnderRoot(
                f"retained eigenvalue {lam} < sigma2 {sigma2}; flag the slot as sigma2-filled")
        diag[k] = lam
        U[:, k] = eig.vectors[:, idx]
        scale[k] = np.sqrt(lam - sigma2)
    X_hat = (U * scale) @ R
    used = {i for i in retained if i is not None}
    discarded = np.array([eig.values[j] for j in range(N) if j not in used])
    kind = classify_stationary(diag, discarded)
    if kind == OPTIMUM:
        kind = GLOBAL_OPTIMUM if len(used) == Q else LOCAL_OPTIMUM
    return StationaryPoint(X_hat=X_hat, retained_eigvals=diag, kind=kind)


def classify_stationary(retained, discarded):
    """Sign analysis of the perturbation along discarded eigenvectors.

    All retained entries above all discarded eigenvalues -> ``optimum``; all below
    -> ``local-minimum``; anything mixed -> ``saddle``.
    """
    retained = np.asarray(retained, dtype=np.float64)
    discarded = np.asarray(discarded, dtype=np.float64)
    if discarded.size == 0 or retained.size == 0:
        return OPTIMUM
    if retained.min() > discarded.max():
        return OPTIMUM
    if retained.max() < discarded.min():
        return LOCAL_MINIMUM
    return SADDLE


def _close(a, b):
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b), 1e-300)


def classify_regime(eigvals, sigma2, Q):
    """Predicted collapse regime for a fixed projection variance.

    Returns ``(regime, predicted_zero_cols)``.  ``sigma2`` exactly on an
    eigenvalue, or a tie between lambda_Q and lambda_{Q+1}, is reported as
    ``ambiguous``; the zero-column count is then the limit from above.
    """
    lam = np.asarray(eigvals, dtype=np.float64)
    N = lam.size
    Q = int(Q)
    top = lam[:Q]
    # number of leading eigenvalues strictly above sigma2 caps the live columns
    live = int(np.sum(top > sigma2))
    zero_cols = Q - live
    on_boundary = any(_close(sigma2, v) for v in lam)
    tie = Q < N and _close(lam[Q - 1], lam[Q])
    if on_boundary:
        hits = [k for k in range(min(Q, N)) if _close(sigma2, lam[k])]
        if hits:
            zero_cols = Q - hits[0]
        return AMBIGUOUS, zero_cols
    if tie:
        return AMBIGUOUS, zero_cols
    if zero_cols == Q:
        return ALL_ZERO, Q
    if zero_cols > 0:
        return q_zero_columns(zero_cols), zero_cols
    if sigma2 < lam[-1]:
        return LOCAL_MIN_CLUSTER, 0
    return GLOBAL_OPTIMUM, 0


def dppca_loglik(Y, X, sigma2):
    """``sum_j log N(y_j | 0, X X^T + sigma2 I)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return linalg.lowrank_loglik(Y, X, sigma2)


def closed_form_loglik(eigvals, retained_eigvals, sigma2, M):
    """Log-likelihood at a stationary point from the spectrum alone.

    ``retained_eigvals`` are the eigenvalues kept in ``Lambda_Q`` (slots filled
    with sigma2 excluded); every other eigenvalue counts as discarded.
    """
    lam = np.asarray(eigvals, dtype=np.float64)
    kept = np.asarray(retained_eigvals, dtype=np.float64)
    N = lam.size
    Qp = kept.size
    discarded_sum = float(np.sum(lam)) - float(np.sum(kept))
    return -0.5 * M * (N * linalg.LOG_2PI + float(np.sum(np.log(kept)))
                       + (N - Qp) * np.log(sigma2) + discarded_sum / sigma2 + Qp)


def stationarity_residual(Y, X_hat, sigma2):
    """``||G K^{-1} X - X||_F`` with ``K = X X^T + sigma2 I``; zero at stationary points."""
    G = gram_matrix(Y)
    K = X_hat @ X_hat.T
    K[np.diag_indices_from(K)] += sigma2
    _, KinvX = linalg.cholesky_logdet_solve(K, X_hat)
    return float(np.linalg.norm(G @ KinvX - X_hat))


def global_optimum(Y, Q, R=None):
    """Top-Q stationary point at the MLE noise level ``sigma2_hat``."""
    eig = gram_eigs(Y)
    s2 = sigma2_mle(eig.values, Q)
    return stationary_x(eig, list(range(Q)), s2, R), s2


def diagnose(Y, Q, sigma2=None):
    """Eigenspectrum, MLE noise level and regime for ``sigma2`` (default: the MLE)."""
    eig = gram_eigs(Y)
    s2_hat = sigma2_mle(eig.values, Q)
    s2 = s2_hat if sigma2 is None else float(sigma2)
    regime, zc = classify_regime(eig.values, s2, Q)
    return DppcaReport(eigvals=eig.values, sigma2_hat=s2_hat, sigma2=s2, Q=Q,
                       regime=regime, predicted_zero_cols=zc)
