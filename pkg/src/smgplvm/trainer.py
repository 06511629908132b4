"""Adam training loop for the SM-RFF GPLVM, collapse telemetry and checkpoint I/O.

Each iteration draws fresh latent samples from q(X) and spectral points from
their prior, evaluates the ELBO on a tape, back-propagates and takes one Adam
step on the negative ELBO.  The Monte-Carlo noise of iteration ``t`` is seeded
by ``(config.seed, t)``, so :func:`smgplvm.model.elbo_mc` with
``rng_seed=(seed, t)`` reproduces the objective the trainer differentiated.

Checkpoint layout (all little-endian)::

    b"AGLV"                      magic
    u32                          format version (1)
    u64 x 5                      N, M, Q, m, L
    f64[N*Q]  mu                 f64[N*Q]  log_s
    f64[m]    log_weights        f64[m*Q]  means
    f64[m*Q]  log_var            f64[1]    log_sigma2
    u64       adam step          f64 x 4   lr, beta1, beta2, eps
    f64[...]  adam first moments, same order and sizes as the parameters
    f64[...]  adam second moments, same order
"""
import csv
import io
import logging
import struct
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from . import linalg
from .errors import NonFiniteObjective, ShapeMismatch
from .kernels import VAR_FLOOR, SmKernelParams
from .model import PARAM_NAMES, VariationalParams, column_groups, elbo_value_and_grad

log = logging.getLogger(__name__)

MAGIC = b"AGLV"
FORMAT_VERSION = 1
TRACE_HEADER = ("iter", "elbo", "term1", "term2", "sigma2", "zero_cols")
# Initial spectral variance: the kernel lengthscale 1 / (2 pi sigma) then equals
# the unit scale of the PCA-initialised latents.  A unit spectral variance
# gives a lengthscale of about 0.16, so early on the kernel explains almost
# nothing and the optimiser switches it off before the frequencies can adapt.
INIT_SPECTRAL_VAR = 1.0 / (4.0 * np.pi ** 2)
# Unit posterior variances for q(X). Tight initial variances pin the latents
# to the PCA solution and the optimiser settles in a nearby poor optimum more often.
INIT_LATENT_LOG_VAR = 0.0


@dataclass
class TrainConfig:
    iterations: int = 10000
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    m: int = 2
    L: int = 50
    Q: int = 2
    I: int = 1
    seed: int = 0
    learn_sigma2: bool = True
    fixed_sigma2: Optional[float] = None
    zero_col_tol: float = 1e-3
    trace_every: int = 100

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learn_sigma2 and self.fixed_sigma2 is None:
            raise ValueError("fixed_sigma2 is required when learn_sigma2 is false")
        if self.fixed_sigma2 is not None and not self.fixed_sigma2 > 0:
            raise ValueError("fixed_sigma2 must be positive")
        if self.L < 2 or self.L % 2:
            raise ValueError("L must be an even integer >= 2")
        if min(self.m, self.Q, self.I, self.trace_every) < 1:
            raise ValueError("m, Q, I and trace_every must be >= 1")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, lr=0.005, beta1=0.9, beta2=0.99, eps=1e-8):
        zeros = {k: np.zeros_like(np.asarray(p, dtype=np.float64)) for k, p in params.items()}
        return cls(lr, beta1, beta2, eps, 0, zeros, {k: z.copy() for k, z in zeros.items()})


def adam_step(state, params, grads):
    """One bias-corrected Adam descent step; returns ``(new_params, new_state)``.

    Parameters without an entry in ``grads`` are left untouched.
    """
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params = dict(params)
    new_m, new_v = dict(state.m), dict(state.v)
    for name, g in grads.items():
        p = np.asarray(params[name], dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


def count_zero_columns(X, tol_rel=1e-3, scale=1.0):
    """Number of latent columns whose RMS is at most ``tol_rel`` times a reference.

    The reference is the largest column RMS or ``scale``, whichever is larger.
    ``scale`` defaults to 1, the standard deviation of the latent prior, so a
    run whose latents have all shrunk to optimiser noise counts as fully
    collapsed.  Columns all at or below 1e-12 RMS always count as zero.
    """
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rms = np.sqrt(np.mean(X * X, axis=0))
    if np.all(rms <= 1e-12):
        return X.shape[1]
    ref = max(float(rms.max()), float(scale))
    return int(np.sum(rms <= tol_rel * ref))


@dataclass
class TraceRecord:
    iteration: int
    elbo: float
    term1: float
    term2: float
    sigma2: float
    zero_cols: int


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(rec)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.records:
            writer.writerow([r.iteration, repr(r.elbo), repr(r.term1), repr(r.term2),
                             repr(r.sigma2), r.zero_cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != TRACE_HEADER:
            raise ValueError("not a trace file: bad header")
        return cls([TraceRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]),
                                float(r[4]), int(r[5])) for r in rows[1:] if r])


class TrainResult(NamedTuple):
    vp: VariationalParams
    params: SmKernelParams
    trace: TrainTrace
    adam: AdamState


def pca_scores(Y, Q, rng=None):
    """Top-Q principal component scores of ``Y`` (columns centred), unit variance."""
    Yc = Y - Y.mean(axis=0)
    U, S, _ = np.linalg.svd(Yc, full_matrices=False)
    X = np.zeros((Y.shape[0], Q))
    k = min(Q, S.size)
    X[:, :k] = U[:, :k] * S[:k]
    # fix the sign ambiguity of the SVD for reproducibility across LAPACK builds
    signs = np.sign(X[np.argmax(np.abs(X), axis=0), np.arange(Q)])
    signs[signs == 0] = 1.0
    X *= signs
    sd = X.std(axis=0)
    for q in range(Q):
        if sd[q] > 1e-12:
            X[:, q] /= sd[q]
        elif rng is not None:
            X[:, q] = 0.1 * rng.standard_normal(Y.shape[0])
    return X


def initialise(Y, config, mask=None):
    """PCA warm start for q(X) and a broad SM prior for the kernel."""
    rng = np.random.default_rng(config.seed)
    Yfill = Y if mask is None else np.where(mask, Y, _column_means(Y, mask))
    mu = pca_scores(Yfill, config.Q, rng)
    vp = VariationalParams(mu, np.full_like(mu, INIT_LATENT_LOG_VAR))
    if config.learn_sigma2:
        obs = Y if mask is None else Y[mask]
        sigma2 = 0.1 * float(np.var(obs)) if np.var(obs) > 0 else 0.1
        if config.fixed_sigma2 is not None:
            sigma2 = config.fixed_sigma2
    else:
        sigma2 = config.fixed_sigma2
    params = SmKernelParams(
        log_weights=np.full(config.m, np.log(1.0 / config.m)),
        means=0.1 * rng.standard_normal((config.m, config.Q)),
        log_var=np.full((config.m, config.Q), np.log(INIT_SPECTRAL_VAR)),
        log_sigma2=np.log(sigma2),
    )
    return vp, params


def _column_means(Y, mask):
    counts = np.maximum(mask.sum(axis=0), 1)
    return np.where(mask, Y, 0.0).sum(axis=0) / counts


def _split(values):
    vp = VariationalParams(values["mu"], values["log_s"])
    params = SmKernelParams(values["log_weights"], values["means"], values["log_var"],
                            float(values["log_sigma2"]))
    return vp, params


def train(Y, config, mask=None, init=None, callback=None):
    """Maximise the ELBO with Adam.

    ``init`` optionally supplies ``(VariationalParams, SmKernelParams)``;
    ``callback(iteration, vp, params, breakdown)`` sees the pre-update state.
    Returns a :class:`TrainResult`.  A non-finite objective raises
    :class:`NonFiniteObjective` carrying the last finite ``TrainResult``.
    """
    Y = linalg.as_matrix(Y, "Y")
    linalg.check_finite(Y, "Y")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != Y.shape:
            raise ShapeMismatch(f"mask shape {mask.shape} differs from Y {Y.shape}")
        if mask.all():
            mask = None
    groups = column_groups(mask, Y.shape[1])
    Ytrain = Y if mask is None else np.where(mask, Y, 0.0)
    vp, params = init if init is not None else initialise(Y, config, mask)
    if not config.learn_sigma2:
        params = params.copy()
        params.log_sigma2 = float(np.log(config.fixed_sigma2))
    values = {"mu": vp.mu, "log_s": vp.log_s, "log_weights": params.log_weights,
              "means": params.means, "log_var": params.log_var,
              "log_sigma2": np.asarray(params.log_sigma2)}
    state = AdamState.for_params(values, config.lr, config.beta1, config.beta2, config.eps)
    trainable = [k for k in PARAM_NAMES if config.learn_sigma2 or k != "log_sigma2"]
    trace = TrainTrace()
    floor = np.log(VAR_FLOOR)

    for it in range(1, config.iterations + 1):
        vp, params = _split(values)
        bd, grads = elbo_value_and_grad(Ytrain, vp, params, config.L, config.I,
                                        rng_seed=(config.seed, it), groups=groups)
        if not np.isfinite(bd.total) or not all(np.all(np.isfinite(grads[k])) for k in trainable):
            raise NonFiniteObjective(f"non-finite objective at iteration {it}", iteration=it,
                                     last_good=TrainResult(vp, params, trace, state))
        if callback is not None:
            callback(it, vp, params, bd)
        if it % config.trace_every == 0 or it == config.iterations:
            trace.append(TraceRecord(it, bd.total, bd.term1, bd.term2, params.sigma2,
                                     count_zero_columns(vp.mu, config.zero_col_tol)))
            log.debug("iter %d elbo %.4f sigma2 %.4g", it, bd.total, params.sigma2)
        loss_grads = {k: -grads[k] for k in trainable}
        values, state = adam_step(state, values, loss_grads)
        values["log_var"] = np.maximum(values["log_var"], floor)

    vp, params = _split(values)
    return TrainResult(vp, params, trace, state)


def save_checkpoint(path, result, M, L):
    vp, params, _, state = result
    N, Q = vp.mu.shape
    m = params.m
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<5Q", N, M, Q, m, L))
    arrays = [vp.mu, vp.log_s, params.log_weights, params.means, params.log_var,
              np.asarray([params.log_sigma2])]
    for a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    buf.write(struct.pack("<Q", state.step))
    buf.write(struct.pack("<4d", state.lr, state.beta1, state.beta2, state.eps))
    for moments in (state.m, state.v):
        for name, ref in zip(PARAM_NAMES, arrays):
            a = moments.get(name, np.zeros_like(ref))
            buf.write(np.ascontiguousarray(np.reshape(a, ref.shape), dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(TrainResult, dims)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    N, M, Q, m, L = struct.unpack_from("<5Q", data, 8)
    offset = 8 + 40
    shapes = [(N, Q), (N, Q), (m,), (m, Q), (m, Q), ()]

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
        offset += 8 * n
        return a.reshape(shape) if shape else a.reshape(())

    arrays = [take(s) for s in shapes]
    (step,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    lr, b1, b2, eps = struct.unpack_from("<4d", data, offset)
    offset += 32
    m_mom = {name: take(s) for name, s in zip(PARAM_NAMES, shapes)}
    v_mom = {name: take(s) for name, s in zip(PARAM_NAMES, shapes)}
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    vp = VariationalParams(arrays[0], arrays[1])
    params = SmKernelParams(arrays[2], arrays[3], arrays[4], float(arrays[5]))
    state = AdamState(lr, b1, b2, eps, step, m_mom, v_mom)
    dims = {"N": N, "M": M, "Q": Q, "m": m, "L": L}
    return TrainResult(vp, params, TrainTrace(), state), dims
