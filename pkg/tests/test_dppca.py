import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from smgplvm import dppca, linalg, model
from smgplvm.errors import InvalidQprime, NegativeUnderRoot, NonOrthogonalR
from smgplvm.kernels import linear_kernel_matrix


def test_gram_eigs_examples(rng):
    np.testing.assert_allclose(dppca.gram_eigs(np.eye(3)).values, [1 / 3] * 3, atol=1e-15)
    u, v = rng.standard_normal(6), rng.standard_normal(4)
    vals = dppca.gram_eigs(np.outer(u, v)).values
    assert vals[0] == pytest.approx((v @ v) / 4 * (u @ u), rel=1e-12)
    assert np.all(np.abs(vals[1:]) <= 1e-10)
    Y = rng.standard_normal((9, 5))
    assert dppca.gram_eigs(Y).values.sum() == pytest.approx(np.trace(Y @ Y.T / 5), abs=1e-10)


def test_sigma2_mle():
    lam = np.array([5.0, 3.0, 2.0, 1.0])
    assert dppca.sigma2_mle(lam, 2) == 1.5
    assert dppca.sigma2_mle(lam, 0) == 2.75
    assert dppca.sigma2_mle(lam, 3) == 1.0
    with pytest.raises(InvalidQprime):
        dppca.sigma2_mle(lam, 4)


def _eig(values):
    values = np.asarray(values, dtype=float)
    return linalg.EigenDecomposition(values, np.eye(values.size))


def test_stationary_x_examples():
    sp = dppca.stationary_x(_eig([4.0, 1.0]), [0, 1], 1.0)
    np.testing.assert_allclose(sp.X_hat, [[np.sqrt(3), 0.0], [0.0, 0.0]])
    sp = dppca.stationary_x(_eig([4.0, 3.0, 1.0]), [None, None], 2.0)
    assert np.all(sp.X_hat == 0.0)
    with pytest.raises(NegativeUnderRoot):
        dppca.stationary_x(_eig([4.0, 1.0]), [0, 1], 2.0)
    with pytest.raises(NonOrthogonalR):
        dppca.stationary_x(_eig([4.0, 1.0]), [0, 1], 0.5, R=np.ones((2, 2)))


def test_classify_stationary_cases():
    assert dppca.classify_stationary([5, 4], [3, 2, 1]) == dppca.OPTIMUM
    assert dppca.classify_stationary([2, 1], [5, 4, 3]) == dppca.LOCAL_MINIMUM
    assert dppca.classify_stationary([5, 2], [4, 3, 1]) == dppca.SADDLE


def test_regime_examples():
    lam = [5.0, 4.0, 3.0, 2.0, 1.0]
    assert dppca.classify_regime(lam, 3.5, 3) == ("q-zero-columns(1)", 1)
    assert dppca.classify_regime(lam, 4.5, 3) == ("q-zero-columns(2)", 2)
    assert dppca.classify_regime(lam, 6.0, 3) == (dppca.ALL_ZERO, 3)
    assert dppca.classify_regime(lam, 0.5, 3) == (dppca.LOCAL_MIN_CLUSTER, 0)
    assert dppca.classify_regime(lam, 1.5, 3) == (dppca.GLOBAL_OPTIMUM, 0)
    regime, zc = dppca.classify_regime(lam, 4.0, 3)
    assert regime == dppca.AMBIGUOUS and zc == 2
    assert dppca.classify_regime([1.0, 1.0, 1.0], 0.5, 2)[0] == dppca.AMBIGUOUS


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=8), st.integers(1, 7))
def test_regime_monotone(values, Q):
    lam = np.sort(np.asarray(values))[::-1]
    Q = min(Q, lam.size)
    grid = np.linspace(1e-3, 2 * lam[0], 200)
    counts = [dppca.classify_regime(lam, s, Q)[1] for s in grid]
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_global_optimum_stationary_and_top_subspace(rng):
    Y = rng.standard_normal((20, 15))
    sp, s2 = dppca.global_optimum(Y, 3)
    assert sp.kind == dppca.GLOBAL_OPTIMUM
    assert dppca.stationarity_residual(Y, sp.X_hat, s2) <= 1e-8
    U = dppca.gram_eigs(Y).vectors[:, :3]
    angles = scipy.linalg.subspace_angles(sp.X_hat, U)
    assert angles.max() <= 1e-8
    best = dppca.dppca_loglik(Y, sp.X_hat, s2)
    for _ in range(100):
        Xp = sp.X_hat + 1e-2 * rng.standard_normal(sp.X_hat.shape)
        assert dppca.dppca_loglik(Y, Xp, s2) <= best


def test_rotation_invariance(rng):
    Y = rng.standard_normal((10, 6))
    eig = dppca.gram_eigs(Y)
    s2 = dppca.sigma2_mle(eig.values, 2)
    R, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    a = dppca.stationary_x(eig, [0, 1], s2)
    b = dppca.stationary_x(eig, [0, 1], s2, R=R)
    assert dppca.dppca_loglik(Y, a.X_hat, s2) == pytest.approx(
        dppca.dppca_loglik(Y, b.X_hat, s2), abs=1e-10)


def test_closed_form_loglik_matches_dense(rng):
    Y = rng.standard_normal((12, 7))
    eig = dppca.gram_eigs(Y)
    s2 = 0.5 * eig.values[2]
    sp = dppca.stationary_x(eig, [0, 2, None], s2)
    dense = model.exact_log_marginal(Y, sp.X_hat, linear_kernel_matrix, s2)
    closed = dppca.closed_form_loglik(eig.values, eig.values[[0, 2]], s2, 7)
    assert dense == pytest.approx(closed, abs=1e-8)
    assert dppca.stationarity_residual(Y, sp.X_hat, s2) <= 1e-8
    assert sp.kind == dppca.SADDLE


def test_diagnose_report(rng):
    Y = rng.standard_normal((8, 4))
    rep = dppca.diagnose(Y, 2)
    assert rep.regime == dppca.GLOBAL_OPTIMUM
    assert rep.sigma2 == rep.sigma2_hat
    text = rep.to_text()
    assert "regime: global-optimum" in text
    assert float(text.split("eigvals_sum: ")[1].split("\n")[0]) == pytest.approx(
        np.trace(Y @ Y.T) / 4, abs=1e-10)
