import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smgplvm import autodiff as ad
from smgplvm import linalg
from smgplvm.errors import NonScalarOutput, ShapeMismatch, UnsupportedPrimitive


def test_sum_forward():
    tape, out = ad.tape_eval(lambda x: ad.sum(x), {"x": np.array([1.0, 2.0, 3.0])})
    assert float(out.value) == 6.0


def test_trace_product():
    def f(A, B):
        return ad.trace(A @ B)

    value, grads = ad.value_and_grad(f, {"A": np.eye(2), "B": np.diag([2.0, 3.0])})
    assert value == 5.0
    np.testing.assert_array_equal(grads["A"], np.diag([2.0, 3.0]))


def test_quadratic_form_gradient():
    value, grads = ad.value_and_grad(lambda x: x @ x, {"x": np.array([1.0, 2.0])})
    assert value == 5.0
    np.testing.assert_array_equal(grads["x"], [2.0, 4.0])


def test_fan_out_matches_square(rng):
    x = rng.standard_normal(5)
    _, g1 = ad.value_and_grad(lambda x: ad.sum(x * x), {"x": x})
    _, g2 = ad.value_and_grad(lambda x: ad.sum(ad.square(x)), {"x": x})
    np.testing.assert_array_equal(g1["x"], g2["x"])


def test_sum_rule(rng):
    x = rng.standard_normal((3, 4))

    def f(x):
        return ad.sum(ad.sin(x))

    def g(x):
        return ad.sum(ad.exp(x) * 0.5)

    _, gf = ad.value_and_grad(f, {"x": x})
    _, gg = ad.value_and_grad(g, {"x": x})
    _, gs = ad.value_and_grad(lambda x: f(x) + g(x), {"x": x})
    np.testing.assert_array_equal(gs["x"], gf["x"] + gg["x"])


def test_backward_twice_identical(rng):
    tape = ad.Tape()
    x = tape.var(rng.standard_normal((4, 3)), name="x")
    out = ad.sum(ad.cos(x @ x.T) / (1.0 + ad.square(x @ x.T)))
    a = tape.backward(out)["x"]
    b = tape.backward(out)["x"]
    assert np.array_equal(a, b)


def test_forward_equals_untracked(rng):
    x = rng.standard_normal((6, 2))
    W = rng.standard_normal((2, 3))

    def f(x, W):
        return ad.sum(ad.log(1.0 + ad.exp(x @ W)) - ad.sqrt(ad.square(x) + 1.0) @ W)

    _, out = ad.tape_eval(f, {"x": x, "W": W})
    with ad.no_grad():
        plain = f(ad.Var(x), ad.Var(W))
    assert float(out.value) == float(plain.value)


def test_numpy_ufunc_dispatch(rng):
    x = rng.standard_normal(4)
    _, g = ad.value_and_grad(lambda x: ad.sum(np.exp(x) + np.sin(x)), {"x": x})
    np.testing.assert_allclose(g["x"], np.exp(x) + np.cos(x), rtol=1e-14)


def test_unsupported_primitive():
    tape = ad.Tape()
    x = tape.var(np.ones(3), name="x")
    with pytest.raises(UnsupportedPrimitive):
        np.tanh(x)
    with pytest.raises(UnsupportedPrimitive):
        x ** 3


def test_shape_mismatch():
    tape = ad.Tape()
    a = tape.var(np.ones((2, 3)), name="a")
    b = tape.var(np.ones((2, 3)), name="b")
    with pytest.raises(ShapeMismatch):
        a @ b


def test_non_scalar_backward():
    tape = ad.Tape()
    x = tape.var(np.ones(3), name="x")
    with pytest.raises(NonScalarOutput):
        tape.backward(x * 2.0)


def test_unreachable_input_gets_zero_gradient():
    tape = ad.Tape()
    x = tape.var(np.ones(2), name="x")
    tape.var(np.ones((2, 2)), name="unused")
    grads = tape.backward(ad.sum(x))
    np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))


def test_broadcast_scalar_gradient():
    def f(s, x):
        return ad.sum(s * x)

    _, g = ad.value_and_grad(f, {"s": np.array(2.0), "x": np.array([1.0, 2.0, 3.0])})
    assert g["s"].shape == ()
    assert float(g["s"]) == 6.0


def test_gradcheck_linear(rng):
    a = rng.standard_normal(7)
    err = ad.gradcheck(lambda x: ad.sum(x * a), {"x": rng.standard_normal(7)})
    assert err <= 1e-9


def test_gradcheck_kl(rng):
    err = ad.gradcheck(ad.diag_kl, {"mu": rng.standard_normal((5, 2)),
                                    "log_s": 0.3 * rng.standard_normal((5, 2))})
    assert err <= 1e-6


def test_gradcheck_rejects_bad_step():
    with pytest.raises(ValueError):
        ad.gradcheck(lambda x: ad.sum(x), {"x": np.ones(2)}, h=1e-2)


def _fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        g.flat[k] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_lowrank_loglik_adjoint_matches_fd(rng):
    N, R = 10, 4
    Phi = rng.standard_normal((N, R))
    y = rng.standard_normal(N)
    s2 = 0.8

    def dense(Phi, s2):
        C = Phi @ Phi.T + s2 * np.eye(N)
        return linalg.dense_gaussian_loglik(y, C)

    _, grads = ad.value_and_grad(
        lambda Phi, s2: ad.lowrank_gaussian_loglik(Phi, s2, y), {"Phi": Phi, "s2": np.array(s2)})
    fd_phi = _fd(lambda P: dense(P, s2), Phi)
    fd_s2 = _fd(lambda s: dense(Phi, float(s[0])), np.array([s2]))[0]
    rel = np.abs(grads["Phi"] - fd_phi) / np.maximum(np.abs(fd_phi), 1e-8)
    assert rel.max() <= 1e-5
    assert abs(float(grads["s2"]) - fd_s2) <= 1e-5 * abs(fd_s2)
    # closed-form adjoint check: (C^-1 y y^T C^-1 - C^-1) Phi
    Cinv = np.linalg.inv(Phi @ Phi.T + s2 * np.eye(N))
    a = Cinv @ y
    np.testing.assert_allclose(grads["Phi"], (np.outer(a, a) - Cinv) @ Phi, atol=1e-10)
    assert float(grads["s2"]) == pytest.approx(0.5 * np.trace(np.outer(a, a) - Cinv), rel=1e-10)


def test_lowrank_loglik_dense_and_rows_paths(rng):
    Phi = rng.standard_normal((9, 3))
    Y = rng.standard_normal((9, 2))
    rows = np.array([0, 2, 3, 7])

    def f(Phi, s2, dense=False):
        return ad.lowrank_gaussian_loglik(Phi, s2, Y[rows], rows=rows, dense=dense)

    v1, g1 = ad.value_and_grad(f, {"Phi": Phi, "s2": np.array(0.4)})
    v2, g2 = ad.value_and_grad(lambda Phi, s2: f(Phi, s2, True),
                               {"Phi": Phi, "s2": np.array(0.4)})
    assert v1 == pytest.approx(v2, abs=1e-10)
    np.testing.assert_allclose(g1["Phi"], g2["Phi"], atol=1e-10)
    missing = np.setdiff1d(np.arange(9), rows)
    assert np.all(g1["Phi"][missing] == 0.0)
    assert ad.gradcheck(f, {"Phi": Phi, "s2": np.array(0.4)}) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_gradcheck_composite_graph(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 2))
    W = rng.standard_normal((3, 2))
    Y = rng.standard_normal((5, 2))

    def f(X, W, log_s2):
        P = ad.sin(X @ W.T) * 0.5 + ad.cos(X @ W.T) * 0.5
        return ad.lowrank_gaussian_loglik(P, ad.exp(log_s2), Y)

    err = ad.gradcheck(f, {"X": X, "W": W, "log_s2": np.array(-0.5)})
    assert err <= 1e-5
