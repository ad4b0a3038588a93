import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from bvmlab import ValidationError
from bvmlab.divergence import EstimateWithError
from bvmlab.pmom import (
    PMomConfig,
    PMomModel,
    build_pmom_model,
    closeness_diagnostics,
    fit_true_model,
    log_dp,
    moment_constant,
    pmom_bvm_hellinger,
    pmom_log_prior,
    pmom_posterior_logdensity,
    snis_expectation,
)
from bvmlab.regression import fit, generate_design, simulate_response

# [DERIVED] beta^2 phi(beta) against phi(beta): BC = E|Z| = sqrt(2/pi)
H2_NULL = 1.0 - math.sqrt(2.0 / math.pi)


def standard_model(r=1):
    return PMomModel((0,), np.eye(1), np.zeros(1), EstimateWithError(float(math.prod(range(2 * r - 1, 0, -2))), 0.0, 0), r, 1.0)


def dataset(n, p, seed, beta0=None):
    X = generate_design(n, p, "orthogonalized", seed=seed)
    beta0 = np.ones(p) if beta0 is None else beta0
    return fit(X, simulate_response(X, beta0, 1.0, seed=seed + 1))


def exact_q(model):
    # diagonal covariance, r = 1: prod(mu_i^2 + v_i)
    v = model.sigma2 * np.diag(np.linalg.inv(model.C))
    return float(np.prod(model.beta_tilde**2 + v))


def test_config_validation():
    for bad in ({"r": 0}, {"r": 1.5}, {"tau": 0.0}, {"sigma2": -1.0}, {"A": [[1.0, 2.0], [2.0, 1.0]]}):
        with pytest.raises(ValidationError):
            PMomConfig(**bad)
    with pytest.raises(ValidationError):
        PMomConfig(A=np.eye(2)).scale_matrix(3)


def test_prior_normalises_p1():
    cfg = PMomConfig()
    f = lambda b: math.exp(pmom_log_prior(np.array([[b]]), cfg)[0]) if b != 0 else 0.0
    assert integrate.quad(f, -np.inf, np.inf, epsabs=1e-12)[0] == pytest.approx(1.0, abs=1e-8)
    # density is (2 pi)^{-1/2} beta^2 exp(-beta^2 / 2)
    assert math.exp(pmom_log_prior(np.array([[1.3]]), cfg)[0]) == pytest.approx(1.3**2 * math.exp(-1.3**2 / 2) / math.sqrt(2 * math.pi))


def test_prior_zero_coordinate():
    assert pmom_log_prior(np.array([[0.0, 1.0]]), PMomConfig())[0] == -np.inf


def test_dp_r2():
    cfg = PMomConfig(r=2)
    assert math.exp(log_dp(cfg, 1)) == pytest.approx(1.0 / 3.0, rel=1e-15)
    f = lambda b: math.exp(pmom_log_prior(np.array([[b]]), cfg)[0]) if b != 0 else 0.0
    assert integrate.quad(f, -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-8)


def test_dp_general_scale():
    # A = 2: E_{N(0, 1/2)} beta^2 = 1/2, so d_1 = 2
    cfg = PMomConfig(A=np.array([[2.0]]))
    assert math.exp(log_dp(cfg, 1, seed=3)) == pytest.approx(2.0, rel=0.03)


def test_moment_constant_trivial():
    one = moment_constant([0.0], [[1.0]], 1, seed=1)
    assert abs(one.value - 1.0) < 3 * one.std_error
    three = moment_constant([0.0], [[1.0]], 2, seed=2)
    assert abs(three.value - 3.0) < 3 * three.std_error
    assert three.std_error / three.value < 0.01
    with pytest.raises(ValidationError):
        moment_constant([0.0], [[1.0]], 1, m=9999)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(0.05, 2), min_size=3, max_size=3), st.integers(0, 1000))
def test_moment_constant_diagonal(mu, v, seed):
    est = moment_constant(mu, np.diag(v), 1, seed=seed)
    assert abs(est.value - np.prod(np.square(mu) + v)) < 3 * est.std_error + 1e-12


def test_posterior_density_standard_model():
    model = standard_model()
    f = lambda b: math.exp(pmom_posterior_logdensity(np.array([[b]]), model)[0]) if b != 0 else 0.0
    assert integrate.quad(f, -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-6)
    assert pmom_posterior_logdensity(np.array([[0.0]]), model)[0] == -np.inf


def test_posterior_normalisation_k1_k2():
    for p in (1, 2):
        data = dataset(12, p, 40 + p, beta0=np.full(p, 0.4))
        model = build_pmom_model(data, PMomConfig(), seed=1)
        assert abs(model.Q.value - exact_q(model)) < 3 * model.Q.std_error
        model = dataclasses.replace(model, Q=EstimateWithError(exact_q(model), 0.0, 0))
        sd = math.sqrt(1.0 / model.C[0, 0])
        lo, hi = -12 * sd + model.beta_tilde.min(), 12 * sd + model.beta_tilde.max()
        if p == 1:
            total = integrate.quad(lambda b: math.exp(pmom_posterior_logdensity(np.array([[b]]), model)[0]) if b else 0.0, lo, hi, points=[0.0])[0]
        else:
            g = np.linspace(lo, hi, 1601)
            B1, B2 = np.meshgrid(g, g)
            dens = np.exp(pmom_posterior_logdensity(np.column_stack([B1.ravel(), B2.ravel()]), model))
            total = float(integrate.simpson(integrate.simpson(dens.reshape(B1.shape), x=g), x=g))
        assert total == pytest.approx(1.0, abs=1e-4)


def test_snis_moment_identity():
    # E_post[beta^2] = E Z^4 / E Z^2 = 3 at beta_tilde = 0, unit scale
    est = snis_expectation(lambda x: x[:, 0] ** 2, standard_model(), 200_000, 5)
    assert abs(est.value - 3.0) < 3 * est.std_error


def test_sign_symmetry():
    # per-coordinate flips need uncorrelated coordinates (orthogonal design); the global flip always holds
    x = np.random.default_rng(2).standard_normal((10, 2))
    diag = PMomModel((0, 1), np.diag([2.0, 1.0]), np.zeros(2), EstimateWithError(1.0, 0.0, 0), 1, 1.0)
    base = pmom_posterior_logdensity(x, diag)
    for flip in ([-1, 1], [1, -1], [-1, -1]):
        np.testing.assert_allclose(pmom_posterior_logdensity(x * flip, diag), base, rtol=1e-13)
    full = PMomModel((0, 1), np.array([[2.0, 0.3], [0.3, 1.0]]), np.zeros(2), EstimateWithError(1.0, 0.0, 0), 1, 1.0)
    np.testing.assert_allclose(pmom_posterior_logdensity(-x, full), pmom_posterior_logdensity(x, full), rtol=1e-13)


def test_build_model_fields():
    data = dataset(50, 3, 7)
    model = build_pmom_model(data, PMomConfig(tau=2.0), seed=3)
    np.testing.assert_allclose(model.C, data.gram + np.eye(3) / 2.0)
    np.testing.assert_allclose(model.C @ model.beta_tilde, data.X.T @ data.Y)
    assert model.Q.value > 0 and model.Q.std_error / model.Q.value < 0.01
    sub = build_pmom_model(data, PMomConfig(), k=[2, 0], seed=3)
    assert sub.k == (0, 2) and sub.C.shape == (2, 2)
    with pytest.raises(ValidationError):
        build_pmom_model(data, PMomConfig(), k=[5], seed=3)


def test_bvm_hellinger_large_n_small():
    data = dataset(6400, 3, 8)
    cfg = PMomConfig()
    model = build_pmom_model(data, cfg, seed=4)
    assert pmom_bvm_hellinger(model, data, cfg, 20_000, 5).value < 0.05


def test_bvm_hellinger_null_data():
    # beta_hat ~ 0: the prior's zero at the origin keeps H^2 near 1 - sqrt(2/pi)
    n = 6400
    X = generate_design(n, 1, "orthogonalized", seed=9)
    Y = simulate_response(X, np.zeros(1), 1.0, seed=10)
    Y -= X[:, 0] * (X[:, 0] @ Y) / n  # force beta_hat = 0
    data = fit(X, Y)
    cfg = PMomConfig()
    model = build_pmom_model(data, cfg, seed=6)
    est = pmom_bvm_hellinger(model, data, cfg, 100_000, 7)
    assert est.value > 0.15
    assert abs(est.value - H2_NULL) < 3 * est.std_error + 0.01


def test_bvm_hellinger_needs_true_columns():
    data = dataset(50, 3, 11)
    model = build_pmom_model(data, PMomConfig(), k=[0, 1], seed=3)
    with pytest.raises(ValidationError):
        pmom_bvm_hellinger(model, data, PMomConfig(), 1000, 0)
    true = fit_true_model(data, model.k)
    assert pmom_bvm_hellinger(model, true, PMomConfig(), 1000, 0).n_samples > 0


def test_closeness_tau_limit():
    data = dataset(100, 3, 12)
    shift = [closeness_diagnostics(build_pmom_model(data, PMomConfig(tau=tau), seed=1), data).shift_quadform for tau in (1.0, 1e3, 1e6)]
    assert shift[0] > shift[1] > shift[2] and shift[2] < 1e-10


def test_det_ratio_bracket():
    t = 3
    prev = None
    for n in (100, 400, 1600):
        data = dataset(n, t, 13)
        diag = closeness_diagnostics(build_pmom_model(data, PMomConfig(), seed=1), data)
        # orthogonal design: X^T X = n I, so C = (n + 1) I and both ratios are explicit
        bracket = (1 + 1 / (2 * n)) ** t
        assert 1.0 <= diag.det_ratio_1 <= bracket * (1 + 1e-12)
        assert diag.det_ratio_2 <= 1.0
        assert diag.det_ratio_2 == pytest.approx(((2 * n + 1) / (2 * n + 2)) ** t, rel=1e-12)
        if prev is not None:
            assert diag.det_ratio_1 < prev[0] and diag.det_ratio_2 > prev[1]
        prev = (diag.det_ratio_1, diag.det_ratio_2)
        assert diag.h2_covariance >= 0 and diag.h2_mean_shift >= 0


def test_shift_slope():
    # stated scaling: slope of log shift on log n <= -2
    ns = (100, 400, 1600, 6400)
    means = []
    for n in ns:
        vals = []
        for rep in range(20):
            data = dataset(n, 3, 1000 * rep + n)
            vals.append(closeness_diagnostics(build_pmom_model(data, PMomConfig(), seed=rep), data).shift_quadform)
        means.append(np.mean(vals))
    slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
    assert slope <= -2.0, f"slope {slope:.3f}"
