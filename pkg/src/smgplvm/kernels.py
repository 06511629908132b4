"""Stationary kernels and the stacked spectral-mixture random Fourier feature map.

Spectral mixture (SM) kernel with m components over Q input dimensions::

    k(x, x') = sum_i a_i exp(-2 pi^2 sum_q v_iq t_q^2) cos(2 pi mu_i . t),   t = x - x'

Its random-feature approximation stacks one block per component::

    phi(x) = [sqrt(a_1) f(x; W_1), ..., sqrt(a_m) f(x; W_m)],
    f(x; W) = sqrt(2/L) [sin(2 pi w_1.x), cos(2 pi w_1.x), ..., cos(2 pi w_{L/2}.x)]

with spectral points ``w = mu_i + sqrt(v_i) * eps`` drawn by reparameterisation,
so the map is differentiable in every kernel hyperparameter.
"""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, NonPositiveEpsilon, OddL

TWO_PI = 2.0 * np.pi
VAR_FLOOR = 1e-12


@dataclass
class SmKernelParams:
    """SM hyperparameters in log space plus the projection (noise) variance."""

    log_weights: np.ndarray   # (m,)
    means: np.ndarray         # (m, Q)
    log_var: np.ndarray       # (m, Q)
    log_sigma2: float = 0.0

    def __post_init__(self):
        self.log_weights = np.atleast_1d(np.asarray(self.log_weights, dtype=np.float64))
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.log_var = np.atleast_2d(np.asarray(self.log_var, dtype=np.float64))
        self.log_sigma2 = float(self.log_sigma2)
        m = self.log_weights.shape[0]
        if self.means.shape[0] != m or self.log_var.shape != self.means.shape:
            raise DimensionMismatch(
                f"inconsistent SM shapes: weights {self.log_weights.shape}, "
                f"means {self.means.shape}, log_var {self.log_var.shape}")

    @classmethod
    def from_natural(cls, weights, means, variances, sigma2=1.0):
        return cls(np.log(weights), means, np.log(variances), np.log(sigma2))

    @property
    def m(self):
        return self.log_weights.shape[0]

    @property
    def Q(self):
        return self.means.shape[1]

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def variances(self):
        return np.exp(self.log_var)

    @property
    def sigma2(self):
        return float(np.exp(self.log_sigma2))

    def copy(self):
        return SmKernelParams(self.log_weights.copy(), self.means.copy(),
                              self.log_var.copy(), self.log_sigma2)


@dataclass
class SpectralSample:
    eps: np.ndarray     # (m, L/2, Q) standard normal draws
    points: np.ndarray  # (m, L/2, Q)

    @property
    def L(self):
        return 2 * self.eps.shape[1]

    @classmethod
    def from_eps(cls, eps, params):
        eps = np.asarray(eps, dtype=np.float64)
        sd = np.sqrt(np.exp(params.log_var))
        return cls(eps=eps, points=params.means[:, None, :] + sd[:, None, :] * eps)


@dataclass(frozen=True)
class BaseKernelConfig:
    """Fixed generating kernels: ``rbf``, ``periodic`` or a ``sum`` of parts."""

    kind: str = "rbf"
    outputscale: float = 1.0
    lengthscale: float = 1.0
    period: float = 1.0
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("rbf", "periodic", "sum"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "sum":
            if not self.parts:
                raise ValueError("sum kernel needs at least one part")
        elif min(self.outputscale, self.lengthscale, self.period) <= 0:
            raise ValueError("kernel scales must be strictly positive")


PRESETS = {
    "rbf": BaseKernelConfig("rbf", outputscale=1.0, lengthscale=1.0),
    "rbf-periodic": BaseKernelConfig("sum", parts=(
        BaseKernelConfig("rbf", outputscale=0.5, lengthscale=1.0),
        BaseKernelConfig("periodic", outputscale=0.5, lengthscale=1.0, period=4.5),
    )),
}


def _check_dims(x, params):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape[-1] != params.Q:
        raise DimensionMismatch(f"input has {x.shape[-1]} dims, kernel has Q={params.Q}")
    return x


def sm_kernel_eval(x, xp, params):
    x, xp = _check_dims(x, params), _check_dims(xp, params)
    tau = x - xp
    decay = np.exp(-2.0 * np.pi ** 2 * (params.variances @ (tau * tau)))
    return float(np.sum(params.weights * decay * np.cos(TWO_PI * (params.means @ tau))))


def sm_kernel_matrix(X1, X2, params):
    """Exact SM Gram matrix between the rows of ``X1`` and ``X2``."""
    X1 = np.atleast_2d(_check_dims(X1, params))
    X2 = np.atleast_2d(_check_dims(X2, params))
    tau = X1[:, None, :] - X2[None, :, :]
    K = np.zeros((X1.shape[0], X2.shape[0]))
    for a, mu, v in zip(params.weights, params.means, params.variances):
        K += a * np.exp(-2.0 * np.pi ** 2 * ((tau * tau) @ v)) * np.cos(TWO_PI * (tau @ mu))
    return K


def _rbf(sq, cfg):
    return cfg.outputscale * np.exp(-sq / (2.0 * cfg.lengthscale ** 2))


def base_kernel_matrix(X1, X2, cfg):
    X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
    X2 = np.atleast_2d(np.asarray(X2, dtype=np.float64))
    if X1.shape[1] != X2.shape[1]:
        raise DimensionMismatch(f"inputs have {X1.shape[1]} and {X2.shape[1]} dims")
    if cfg.kind == "sum":
        return sum(base_kernel_matrix(X1, X2, part) for part in cfg.parts)
    tau = X1[:, None, :] - X2[None, :, :]
    if cfg.kind == "rbf":
        return _rbf(np.sum(tau * tau, axis=-1), cfg)
    s = np.sin(np.pi * np.abs(tau) / cfg.period)
    return cfg.outputscale * np.exp(-2.0 * np.sum(s * s, axis=-1) / cfg.lengthscale ** 2)


def base_kernel_eval(x, xp, cfg):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    xp = np.atleast_1d(np.asarray(xp, dtype=np.float64))
    if x.shape != xp.shape:
        raise DimensionMismatch(f"inputs have shapes {x.shape} and {xp.shape}")
    return float(base_kernel_matrix(x[None, :], xp[None, :], cfg)[0, 0])


def linear_kernel_matrix(X1, X2):
    return np.atleast_2d(X1) @ np.atleast_2d(X2).T


def _check_L(L):
    if int(L) != L or L < 2 or L % 2:
        raise OddL(f"feature count L must be an even integer >= 2, got {L}")
    return int(L)


def draw_eps(rng, m, L, Q):
    return rng.standard_normal((m, _check_L(L) // 2, Q))


def sample_spectral_points(params, L, rng_seed):
    rng = np.random.default_rng(rng_seed)
    return SpectralSample.from_eps(draw_eps(rng, params.m, L, params.Q), params)


def feature_matrix(X, sample, params):
    """Random feature matrix ``Phi`` (N x mL); row n is ``phi(x_n)``."""
    X = np.atleast_2d(_check_dims(X, params))
    if sample.points.shape[0] != params.m or sample.points.shape[2] != params.Q:
        raise DimensionMismatch(
            f"sample shape {sample.points.shape} does not match m={params.m}, Q={params.Q}")
    L = sample.L
    N = X.shape[0]
    Phi = np.empty((N, params.m * L))
    for i in range(params.m):
        P = TWO_PI * (X @ sample.points[i].T)
        coef = np.sqrt(np.exp(params.log_weights[i])) * np.sqrt(2.0 / L)
        block = Phi[:, i * L:(i + 1) * L]
        block[:, 0::2] = np.sin(P) * coef
        block[:, 1::2] = np.cos(P) * coef
    return Phi


def sm_rff_features(x, sample, params):
    return feature_matrix(np.atleast_1d(x)[None, :], sample, params)[0]


def _interleave_matrices(L):
    half = L // 2
    Es = np.zeros((half, L))
    Ec = np.zeros((half, L))
    Es[np.arange(half), 2 * np.arange(half)] = 1.0
    Ec[np.arange(half), 2 * np.arange(half) + 1] = 1.0
    return Es, Ec


def feature_graph(X, eps, log_weights, means, log_var):
    """Tape-recordable version of :func:`feature_matrix`.

    ``X``, ``log_weights``, ``means`` and ``log_var`` may be :class:`~smgplvm.autodiff.Var`
    objects; ``eps`` is constant noise of shape (m, L/2, Q).  Interleaving and
    stacking are done with constant 0/1 matrices so only supported primitives
    appear on the tape; the products are exact.
    """
    m, half, _ = eps.shape
    L = 2 * half
    Es, Ec = _interleave_matrices(L)
    root = np.sqrt(2.0 / L)
    Phi = None
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        sd = ad.sqrt(ad.exp(e @ log_var))
        W = (e @ means) + sd * eps[i]
        P = TWO_PI * (X @ W.T)
        block = ad.sin(P) @ Es + ad.cos(P) @ Ec
        coef = ad.sqrt(ad.exp(e @ log_weights)) * root
        place = np.zeros((L, m * L))
        place[np.arange(L), i * L + np.arange(L)] = 1.0
        term = (block * coef) @ place
        Phi = term if Phi is None else Phi + term
    return Phi


def rff_concentration_bound(params, N, L, epsilon, K_norm):
    """Matrix-Bernstein tail bound on ``P(||K_hat - K||_2 >= epsilon)`` (unclipped)."""
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon}")
    a = float(np.sqrt(np.sum(params.weights ** 2)))
    m = params.m
    denom = 2.0 * N * a * (6.0 * K_norm + 3.0 * N * a * np.sqrt(m) + 8.0 * epsilon)
    return float(N * np.exp(-3.0 * epsilon ** 2 * L / denom))
