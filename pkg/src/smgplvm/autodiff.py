"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records primitive operations on :class:`Var` objects as they run
(a Wengert list).  :meth:`Tape.backward` walks the list in reverse and
accumulates adjoints.  Besides elementwise arithmetic, ``matmul``, ``transpose``,
``sum`` and ``trace``, two composite nodes carry hand-derived adjoints:
``lowrank_gaussian_loglik`` and ``diag_kl``.

Usage::

    tape = Tape()
    x = tape.var(np.array([1.0, 2.0]), name="x")
    y = (x @ x)
    grads = tape.backward(y)     # {"x": array([2., 4.])}
"""
import contextlib

import numpy as np

from . import linalg
from .errors import NonScalarOutput, ShapeMismatch, UnsupportedPrimitive

_RECORDING = [True]


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording them on any tape."""
    _RECORDING.append(False)
    try:
        yield
    finally:
        _RECORDING.pop()


class Var:
    __slots__ = ("value", "tape", "index", "requires_grad", "name")

    def __init__(self, value, tape=None, index=None, requires_grad=False, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __float__(self):
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, power):
        if power == 2:
            return square(self)
        raise UnsupportedPrimitive(f"power {power!r} is not a supported primitive")

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        op = _UFUNCS.get(ufunc)
        if method != "__call__" or op is None or kwargs:
            raise UnsupportedPrimitive(f"numpy ufunc {ufunc.__name__} is not supported on Var")
        return op(*inputs)


class Tape:
    """Ordered record of primitive operations; operands always precede results."""

    def __init__(self):
        self.nodes = []   # (out_index, parents, vjp)
        self._leaves = {}
        self._count = 0

    def _new_index(self):
        self._count += 1
        return self._count - 1

    def var(self, value, name=None, requires_grad=True):
        value = np.array(value, dtype=np.float64)
        v = Var(value, tape=self, index=self._new_index(), requires_grad=requires_grad, name=name)
        if name is not None:
            if name in self._leaves:
                raise ValueError(f"duplicate input name {name!r}")
            self._leaves[name] = v
        return v

    def backward(self, output):
        """Gradients of scalar ``output`` with respect to every named input."""
        if not isinstance(output, Var) or output.value.size != 1:
            raise NonScalarOutput("backward() needs a scalar output")
        grads = {}
        if output.tape is self and output.requires_grad:
            adj = {output.index: np.ones_like(output.value)}
            for out_index, parents, vjp in reversed(self.nodes):
                g = adj.pop(out_index, None)
                if g is None:
                    continue
                for parent, pg in zip(parents, vjp(g)):
                    if pg is None or not parent.requires_grad or parent.tape is not self:
                        continue
                    pg = _unbroadcast(pg, parent.shape)
                    if parent.index in adj:
                        adj[parent.index] = adj[parent.index] + pg
                    else:
                        adj[parent.index] = pg
            grads = adj
        return {name: np.array(grads.get(v.index, np.zeros_like(v.value)), dtype=np.float64)
                for name, v in self._leaves.items() if v.requires_grad}


def _unbroadcast(g, shape):
    g = np.asarray(g, dtype=np.float64)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _wrap(x):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def _record(value, parents, vjp):
    tape = None
    for p in parents:
        if p.tape is not None and p.requires_grad:
            if tape is not None and p.tape is not tape:
                raise ValueError("operands belong to different tapes")
            tape = p.tape
    if tape is None or not _RECORDING[-1]:
        return Var(value)
    out = Var(value, tape=tape, index=tape._new_index(), requires_grad=True)
    tape.nodes.append((out.index, parents, vjp))
    return out


def _broadcast_check(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "add")
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def subtract(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "subtract")
    return _record(a.value - b.value, (a, b), lambda g: (g, -g))


def negative(a):
    a = _wrap(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def multiply(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "multiply")
    av, bv = a.value, b.value
    return _record(av * bv, (a, b), lambda g: (g * bv, g * av))


def divide(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_check(a, b, "divide")
    av, bv = a.value, b.value
    out = av / bv
    return _record(out, (a, b), lambda g: (g / bv, -g * out / bv))


def exp(a):
    a = _wrap(a)
    out = np.exp(a.value)
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    a = _wrap(a)
    av = a.value
    return _record(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    a = _wrap(a)
    out = np.sqrt(a.value)
    return _record(out, (a,), lambda g: (g * 0.5 / out,))


def sin(a):
    a = _wrap(a)
    av = a.value
    return _record(np.sin(av), (a,), lambda g: (g * np.cos(av),))


def cos(a):
    a = _wrap(a)
    av = a.value
    return _record(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def square(a):
    a = _wrap(a)
    av = a.value
    return _record(av * av, (a,), lambda g: (2.0 * g * av,))


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {av.shape} and {bv.shape} are incompatible")

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:            # matrix @ vector
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:            # vector @ matrix
            return bv @ g, np.outer(av, g)
        return g * bv, g * av       # inner product

    return _record(av @ bv, (a, b), vjp)


def transpose(a):
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-D operand, got {a.shape}")
    return _record(np.ascontiguousarray(a.value.T), (a,), lambda g: (g.T,))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    a = _wrap(a)
    shape = a.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.sum(a.value, axis=axis), (a,), vjp)


def trace(a):
    a = _wrap(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"trace needs a square matrix, got {a.shape}")
    n = a.shape[0]
    return _record(np.trace(a.value), (a,), lambda g: (g * np.eye(n),))


def lowrank_gaussian_loglik(Phi, sigma2, Y, rows=None, dense=False):
    """Sum over columns of ``log N(y_j | 0, Phi Phi^T + sigma2 I)``.

    ``rows`` restricts the likelihood to a subset of observations (missing data);
    ``Y`` must then already hold only those rows.  The default path uses the
    Woodbury identities; ``dense=True`` factors the N x N covariance instead and
    exists as a cross-check.

    Adjoints, with ``C = Phi Phi^T + sigma2 I`` and ``a = C^{-1} Y``::

        dL/dPhi    = (a a^T - M C^{-1}) Phi
        dL/dsigma2 = (||a||_F^2 - M tr C^{-1}) / 2
        dL/dY      = -a
    """
    Phi, sigma2, Y = _wrap(Phi), _wrap(sigma2), _wrap(Y)
    Pv = Phi.value if rows is None else Phi.value[rows]
    s2 = float(sigma2.value)
    Yv = Y.value.reshape(Y.shape[0], -1)
    if Yv.shape[0] != Pv.shape[0]:
        raise ShapeMismatch(f"Y has {Yv.shape[0]} rows but Phi has {Pv.shape[0]}")
    M = Yv.shape[1]
    if dense:
        C = Pv @ Pv.T
        C[np.diag_indices_from(C)] += linalg._check_sigma2(s2)
        value = linalg.dense_gaussian_loglik(Yv, C)
    else:
        cov = linalg.LowRankCov(Pv, s2)
        alpha = cov.solve(Yv)
        value = (-0.5 * M * cov.N * linalg.LOG_2PI - 0.5 * M * cov.logdet()
                 - 0.5 * float(np.sum(Yv * alpha)))

    def vjp(g):
        g = float(g)
        if dense:
            Cinv = np.linalg.inv(C)
            a = Cinv @ Yv
            cinv_phi = Cinv @ Pv
            tr_cinv = float(np.trace(Cinv))
        else:
            a = alpha
            cinv_phi = cov.inv_times_phi()
            tr_cinv = cov.trace_inv()
        g_sub = g * (a @ (a.T @ Pv) - M * cinv_phi)
        if rows is None:
            g_phi = g_sub
        else:
            g_phi = np.zeros_like(Phi.value)
            g_phi[rows] = g_sub
        g_s2 = g * 0.5 * (float(np.sum(a * a)) - M * tr_cinv)
        return g_phi, np.full(sigma2.shape, g_s2), (-g * a).reshape(Y.shape)

    return _record(np.asarray(value), (Phi, sigma2, Y), vjp)


def diag_kl(mu, log_s):
    """``KL(N(mu, diag e^{log_s}) || N(0, I))`` summed over rows."""
    mu, log_s = _wrap(mu), _wrap(log_s)
    if mu.shape != log_s.shape:
        raise ShapeMismatch(f"mu {mu.shape} and log_s {log_s.shape} differ")
    mv, lv = mu.value, log_s.value
    s = np.exp(lv)
    value = 0.5 * np.sum(s + mv * mv - lv - 1.0)
    return _record(np.asarray(value), (mu, log_s), lambda g: (g * mv, 0.5 * g * (s - 1.0)))


_UFUNCS = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.exp: exp,
    np.log: log,
    np.sqrt: sqrt,
    np.sin: sin,
    np.cos: cos,
    np.square: square,
    np.matmul: matmul,
}


def tape_eval(graph, inputs, requires_grad=True):
    """Run ``graph(**vars)`` on a fresh tape; returns ``(tape, output)``."""
    tape = Tape()
    args = {name: tape.var(value, name=name, requires_grad=requires_grad)
            for name, value in inputs.items()}
    out = graph(**args)
    return tape, out


def value_and_grad(graph, inputs):
    tape, out = tape_eval(graph, inputs)
    return float(out.value), tape.backward(out)


def backward(output):
    if not isinstance(output, Var) or output.tape is None:
        if isinstance(output, Var) and output.value.size != 1:
            raise NonScalarOutput("backward() needs a scalar output")
        return {}
    return output.tape.backward(output)


def gradcheck(graph, inputs, h=1e-5):
    """Worst relative error between tape gradients and central differences.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``.  ``graph`` must be a
    deterministic function of its inputs (fix any RNG seed inside it).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    _, grads = value_and_grad(graph, inputs)

    def f(point):
        with no_grad():
            return float(graph(**{k: Var(v) for k, v in point.items()}).value)

    worst = 0.0
    for name, base in inputs.items():
        flat = base.reshape(-1)
        analytic = grads[name].reshape(-1)
        for k in range(flat.size):
            plus = {n: v.copy() for n, v in inputs.items()}
            minus = {n: v.copy() for n, v in inputs.items()}
            plus[name].reshape(-1)[k] += h
            minus[name].reshape(-1)[k] -= h
            numeric = (f(plus) - f(minus)) / (2.0 * h)
            denom = max(abs(analytic[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[k] - numeric) / denom)
    return worst
