import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smgplvm import autodiff as ad
from smgplvm import dppca, model
from smgplvm.errors import EmptyColumn, NonPositiveSigma
from smgplvm.kernels import SmKernelParams, linear_kernel_matrix, sm_kernel_matrix
from smgplvm.model import VariationalParams


def small_problem(rng, N=12, M=3, Q=2, m=2):
    Y = rng.standard_normal((N, M))
    vp = VariationalParams(rng.standard_normal((N, Q)), 0.3 * rng.standard_normal((N, Q)) - 1.0)
    params = SmKernelParams(rng.normal(-0.5, 0.2, m), rng.normal(0, 0.3, (m, Q)),
                            rng.normal(-2.0, 0.3, (m, Q)), np.log(0.5))
    return Y, vp, params


def test_kl_examples():
    assert model.kl_term(VariationalParams.prior(7, 3)) == 0.0
    assert model.kl_term(VariationalParams([[1.0, 0.0]], [[0.0, 0.0]])) == pytest.approx(0.5)
    vp = VariationalParams([[0.0, 0.0]], np.log([[2.0, 2.0]]))
    assert model.kl_term(vp) == pytest.approx(1 - np.log(2), abs=1e-15)
    assert model.kl_term(vp) == pytest.approx(0.306853, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    vp = VariationalParams(rng.normal(0, 2, (4, 3)), rng.normal(0, 3, (4, 3)))
    assert model.kl_term(vp) >= 0.0


def test_lowrank_loglik_examples(rng):
    lp = model.lowrank_gaussian_loglik
    assert lp(np.zeros(2), np.zeros((2, 3)), 1.0) == pytest.approx(-np.log(2 * np.pi), abs=1e-12)
    assert lp(np.array([1.0, 0.0]), np.zeros((2, 3)), 1.0) == pytest.approx(-2.337877, abs=1e-6)
    Phi = rng.standard_normal((30, 12))
    y = rng.standard_normal(30)
    C = Phi @ Phi.T + 0.3 * np.eye(30)
    sign, logdet = np.linalg.slogdet(C)
    dense = -15 * np.log(2 * np.pi) - 0.5 * logdet - 0.5 * y @ np.linalg.solve(C, y)
    assert abs(lp(y, Phi, 0.3) - dense) <= 1e-8
    with pytest.raises(NonPositiveSigma):
        lp(y, Phi, 0.0)


def test_elbo_prior_kl_zero_and_deterministic(rng):
    Y, _, params = small_problem(rng)
    vp = VariationalParams.prior(12, 2)
    a = model.elbo_mc(Y, vp, params, L=8, rng_seed=3)
    b = model.elbo_mc(Y, vp, params, L=8, rng_seed=3)
    assert a.term2 == 0.0
    assert a == b
    assert a.total == a.term1 - a.term2


def test_elbo_dense_path_agrees(rng):
    Y, vp, params = small_problem(rng)
    a = model.elbo_mc(Y, vp, params, L=8, rng_seed=5)
    b = model.elbo_mc(Y, vp, params, L=8, rng_seed=5, dense=True)
    assert abs(a.total - b.total) <= 1e-8


def test_tape_forward_equals_elbo_mc(rng):
    Y, vp, params = small_problem(rng)
    bd, _ = model.elbo_value_and_grad(Y, vp, params, L=8, I=2, rng_seed=(4, 9))
    ref = model.elbo_mc(Y, vp, params, L=8, I=2, rng_seed=(4, 9))
    assert bd.total == ref.total
    assert bd.per_sample_term1 == ref.per_sample_term1


def test_term1_is_sample_average(rng):
    Y, vp, params = small_problem(rng)
    bd = model.elbo_mc(Y, vp, params, L=8, I=4, rng_seed=1)
    assert bd.term1 == pytest.approx(np.mean(bd.per_sample_term1), rel=1e-14)


def test_term1_matches_direct_numpy_evaluation(rng):
    # rebuild X, W and Phi from the drawn noise without the tape
    from smgplvm.kernels import SpectralSample, feature_matrix
    Y, vp, params = small_problem(rng)
    bd = model.elbo_mc(Y, vp, params, L=6, I=1, rng_seed=11)
    eps_x, eps_w = model.draw_noise(11, 12, 2, 2, 6, 1)[0]
    X = vp.mu + np.exp(0.5 * vp.log_s) * eps_x
    Phi = feature_matrix(X, SpectralSample.from_eps(eps_w, params), params)
    C = Phi @ Phi.T + params.sigma2 * np.eye(12)
    ref = sum(-6 * np.log(2 * np.pi) - 0.5 * np.linalg.slogdet(C)[1]
              - 0.5 * y @ np.linalg.solve(C, y) for y in Y.T)
    assert bd.term1 == pytest.approx(ref, abs=1e-9)


def test_all_observed_mask_bit_identical(rng):
    Y, vp, params = small_problem(rng)
    a = model.elbo_mc(Y, vp, params, L=8, rng_seed=2)
    b = model.elbo_mc(Y, vp, params, L=8, rng_seed=2, mask=np.ones_like(Y, dtype=bool))
    assert a == b


def test_masked_elbo_uses_observed_rows(rng):
    from smgplvm.kernels import SpectralSample, feature_matrix
    Y, vp, params = small_problem(rng)
    mask = np.ones_like(Y, dtype=bool)
    mask[[0, 3, 5], 1] = False
    mask[[2], 2] = False
    Yc = Y.copy()
    Yc[~mask] = 1e6   # hidden values must not leak into the objective
    bd = model.elbo_mc(Yc, vp, params, L=6, rng_seed=8, mask=mask)
    eps_x, eps_w = model.draw_noise(8, 12, 2, 2, 6, 1)[0]
    X = vp.mu + np.exp(0.5 * vp.log_s) * eps_x
    Phi = feature_matrix(X, SpectralSample.from_eps(eps_w, params), params)
    ref = sum(model.lowrank_gaussian_loglik(Y[mask[:, j], j], Phi[mask[:, j]], params.sigma2)
              for j in range(3))
    assert bd.term1 == pytest.approx(ref, abs=1e-9)


def test_empty_column_rejected(rng):
    Y, vp, params = small_problem(rng)
    mask = np.ones_like(Y, dtype=bool)
    mask[:, 1] = False
    with pytest.raises(EmptyColumn):
        model.elbo_mc(Y, vp, params, L=8, mask=mask)


def test_elbo_variance_shrinks_with_samples(rng):
    Y, vp, params = small_problem(rng)
    one = [model.elbo_mc(Y, vp, params, L=8, I=1, rng_seed=s).total for s in range(20)]
    many = [model.elbo_mc(Y, vp, params, L=8, I=16, rng_seed=s).total for s in range(20)]
    assert np.std(many, ddof=1) < np.std(one, ddof=1)


def test_elbo_gradcheck(rng):
    Y, vp, params = small_problem(rng)
    f = model.elbo_function(Y, L=8, I=1, rng_seed=3)
    assert ad.gradcheck(f, model.param_dict(vp, params)) <= 1e-4


def test_exact_log_marginal_examples(rng):
    zero = lambda A, B: np.zeros((A.shape[0], B.shape[0]))  # noqa: E731
    v = model.exact_log_marginal(np.zeros((2, 1)), np.zeros((2, 1)), zero, 1.0)
    assert v == pytest.approx(-np.log(2 * np.pi), abs=1e-12)
    Y = rng.standard_normal((8, 5))
    X = rng.standard_normal((8, 2))
    lin = model.exact_log_marginal(Y, X, linear_kernel_matrix, 0.7)
    assert lin == pytest.approx(dppca.dppca_loglik(Y, X, 0.7), abs=1e-10)
    p = SmKernelParams.from_natural([1.0], [[0.1, 0.2]], [[0.3, 0.1]])
    k = lambda A, B: sm_kernel_matrix(A, B, p)  # noqa: E731
    perm = rng.permutation(8)
    assert model.exact_log_marginal(Y[perm], X[perm], k, 0.2) == pytest.approx(
        model.exact_log_marginal(Y, X, k, 0.2), abs=1e-10)


def test_column_groups():
    mask = np.array([[1, 1, 0], [1, 0, 1], [1, 1, 0]], dtype=bool)
    groups = model.column_groups(mask, 3)
    got = {tuple(c): (None if r is None else tuple(r)) for r, c in groups}
    assert got == {(0,): None, (1,): (0, 2), (2,): (1,)}
