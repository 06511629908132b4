"""GPLVM with the random-feature SM kernel and its Monte-Carlo ELBO.

    ELBO = sum_j E_q[log N(y_j | 0, Phi Phi^T + sigma2 I)] - sum_n KL(q(x_n) || N(0, I))

with ``q(x_n) = N(mu_n, diag(s_n))`` and spectral points drawn from their prior.
Term 1 is estimated with ``I`` reparameterised samples of (X, W); term 2 is
closed-form.  Missing entries are handled by evaluating each column's
likelihood on its observed rows only.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import EmptyColumn, ShapeMismatch
from .kernels import SmKernelParams, draw_eps, feature_graph

PARAM_NAMES = ("mu", "log_s", "log_weights", "means", "log_var", "log_sigma2")


@dataclass
class VariationalParams:
    mu: np.ndarray      # (N, Q)
    log_s: np.ndarray   # (N, Q), diagonal of S_n in log space

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        self.log_s = np.atleast_2d(np.asarray(self.log_s, dtype=np.float64))
        if self.mu.shape != self.log_s.shape:
            raise ShapeMismatch(f"mu {self.mu.shape} and log_s {self.log_s.shape} differ")

    @classmethod
    def prior(cls, N, Q):
        return cls(np.zeros((N, Q)), np.zeros((N, Q)))

    @property
    def N(self):
        return self.mu.shape[0]

    @property
    def Q(self):
        return self.mu.shape[1]

    def copy(self):
        return VariationalParams(self.mu.copy(), self.log_s.copy())


@dataclass
class ElboBreakdown:
    total: float
    term1: float
    term2: float
    per_sample_term1: list


def kl_term(vp):
    with ad.no_grad():
        return float(ad.diag_kl(vp.mu, vp.log_s).value)


def lowrank_gaussian_loglik(y, Phi, sigma2):
    """``log N(y | 0, Phi Phi^T + sigma2 I)`` via the Woodbury path (summed over
    columns when ``y`` is a matrix)."""
    return linalg.lowrank_loglik(y, Phi, sigma2)


def column_groups(mask, M):
    """Group columns by identical observed-row pattern.

    Returns a list of ``(rows, cols)``; ``rows`` is None for fully observed data.
    """
    if mask is None:
        return [(None, np.arange(M))]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[1] != M:
        raise ShapeMismatch(f"mask has {mask.shape[1]} columns, Y has {M}")
    empty = np.flatnonzero(~mask.any(axis=0))
    if empty.size:
        raise EmptyColumn(f"column {int(empty[0])} has no observed entries")
    if mask.all():
        return [(None, np.arange(M))]
    groups = {}
    for j in range(M):
        groups.setdefault(mask[:, j].tobytes(), []).append(j)
    out = []
    for cols in groups.values():
        rows = np.flatnonzero(mask[:, cols[0]])
        out.append((None if rows.size == mask.shape[0] else rows, np.asarray(cols)))
    return out


def draw_noise(rng_seed, N, Q, m, L, I):
    """Reparameterisation noise for ``I`` samples: list of (eps_X, eps_W)."""
    rng = np.random.default_rng(rng_seed)
    return [(rng.standard_normal((N, Q)), draw_eps(rng, m, L, Q)) for _ in range(I)]


def elbo_graph(Y, groups, noise, mu, log_s, log_weights, means, log_var, log_sigma2,
               dense=False):
    """Build the ELBO from (possibly tape-tracked) parameters.

    Returns ``(total, term1, term2, per_sample)`` as Vars.
    """
    sigma2 = ad.exp(log_sigma2)
    root_s = ad.exp(0.5 * log_s)
    per_sample = []
    term1 = None
    for eps_x, eps_w in noise:
        X = mu + root_s * eps_x
        Phi = feature_graph(X, eps_w, log_weights, means, log_var)
        ll = None
        for rows, cols in groups:
            Yg = Y[:, cols] if rows is None else Y[np.ix_(rows, cols)]
            part = ad.lowrank_gaussian_loglik(Phi, sigma2, Yg, rows=rows, dense=dense)
            ll = part if ll is None else ll + part
        per_sample.append(ll)
        term1 = ll if term1 is None else term1 + ll
    term1 = term1 / float(len(noise))
    term2 = ad.diag_kl(mu, log_s)
    return term1 - term2, term1, term2, per_sample


def param_dict(vp, params):
    return {
        "mu": vp.mu, "log_s": vp.log_s,
        "log_weights": params.log_weights, "means": params.means,
        "log_var": params.log_var, "log_sigma2": np.asarray(params.log_sigma2),
    }


def _validate(Y, vp, params, I):
    Y = linalg.as_matrix(Y, "Y")
    linalg.check_finite(Y, "Y")
    if Y.shape[0] != vp.N:
        raise ShapeMismatch(f"Y has {Y.shape[0]} rows, variational params have {vp.N}")
    if vp.Q != params.Q:
        raise ShapeMismatch(f"latent dim {vp.Q} differs from kernel Q={params.Q}")
    if I < 1:
        raise ValueError("need at least one Monte-Carlo sample")
    return Y


def elbo_mc(Y, vp, params, L, I=1, rng_seed=0, mask=None, dense=False):
    """Monte-Carlo ELBO; deterministic for a fixed ``rng_seed``."""
    Y = _validate(Y, vp, params, I)
    groups = column_groups(mask, Y.shape[1])
    linalg._check_sigma2(params.sigma2)
    noise = draw_noise(rng_seed, vp.N, vp.Q, params.m, L, I)
    with ad.no_grad():
        total, t1, t2, per = elbo_graph(Y, groups, noise, dense=dense, **param_dict(vp, params))
    return ElboBreakdown(float(total.value), float(t1.value), float(t2.value),
                         [float(p.value) for p in per])


def elbo_value_and_grad(Y, vp, params, L, I=1, rng_seed=0, mask=None, groups=None):
    """ELBO breakdown plus gradients of the total w.r.t. every parameter group."""
    Y = _validate(Y, vp, params, I)
    if groups is None:
        groups = column_groups(mask, Y.shape[1])
    linalg._check_sigma2(params.sigma2)
    noise = draw_noise(rng_seed, vp.N, vp.Q, params.m, L, I)
    tape = ad.Tape()
    args = {k: tape.var(v, name=k) for k, v in param_dict(vp, params).items()}
    total, t1, t2, per = elbo_graph(Y, groups, noise, **args)
    grads = tape.backward(total)
    bd = ElboBreakdown(float(total.value), float(t1.value), float(t2.value),
                       [float(p.value) for p in per])
    return bd, grads


def elbo_function(Y, L, I=1, rng_seed=0, mask=None):
    """Closure ``f(**params) -> total`` usable with :func:`autodiff.gradcheck`."""
    Y = linalg.as_matrix(Y, "Y")
    groups = column_groups(mask, Y.shape[1])

    def f(mu, log_s, log_weights, means, log_var, log_sigma2):
        N, Q = mu.shape
        noise = draw_noise(rng_seed, N, Q, log_weights.shape[0], L, I)
        return elbo_graph(Y, groups, noise, mu, log_s, log_weights, means, log_var,
                          log_sigma2)[0]

    return f


def exact_log_marginal(Y, X, kernel, sigma2):
    """``sum_j log N(y_j | 0, K + sigma2 I)`` with ``K = kernel(X, X)`` (dense)."""
    Y = linalg.as_matrix(Y, "Y")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    K = np.array(kernel(X, X), dtype=np.float64)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += float(sigma2)
    return linalg.dense_gaussian_loglik(Y, K)


__all__ = [
    "VariationalParams", "ElboBreakdown", "SmKernelParams", "kl_term",
    "lowrank_gaussian_loglik", "elbo_mc", "elbo_value_and_grad", "elbo_function",
    "exact_log_marginal", "column_groups", "draw_noise", "PARAM_NAMES",
]
