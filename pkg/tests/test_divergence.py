import math

import numpy as np
import pytest
from scipy import stats
from hypothesis import given
from hypothesis import strategies as st

from bvmlab import NumericalError, ValidationError
from bvmlab.divergence import (
    DensityPair,
    EstimateWithError,
    GaussianSpec,
    StudentTSpec,
    check_alpha_tv_bound,
    hellinger_sq_gaussian,
    hellinger_sq_gprior_pair,
    hellinger_sq_mc,
    hellinger_sq_t_vs_gaussian,
    kl_mc,
    lemma1_chain,
    log_ratio_samples,
    renyi_alpha_mc,
    tv_mc,
)

# [DERIVED] closed forms evaluated independently (math module, scipy quad)
H2_N01_N11 = 0.11750309741540454  # 1 - exp(-1/8)
D_HALF_N01_N11 = 0.4700123896616182  # 4 (1 - exp(-1/8))
H2_PAIR_HALF_P2 = 0.05719095841793653  # 1 - sqrt(0.5) / 0.75
H2_T5_N01 = 0.011941600704992728  # scipy.stats densities, quad over the real line


def gauss(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianSpec.from_cov(mean, np.eye(mean.size), var)


def random_gaussian(rng, p):
    A = rng.standard_normal((p, p))
    return GaussianSpec.from_cov(rng.standard_normal(p), A @ A.T + 0.5 * np.eye(p))


def test_estimate_unpacks():
    v, se = EstimateWithError(1.0, 0.1, 10)
    assert (v, se) == (1.0, 0.1)


def test_gaussian_spec_validation():
    with pytest.raises(ValidationError):
        GaussianSpec.from_cov([0.0], [[1.0]], 0.0)
    with pytest.raises(NumericalError):
        GaussianSpec.from_cov([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        StudentTSpec.from_scale(0.0, [0.0], [[1.0]])


def test_logpdf_matches_scipy():
    from scipy import stats

    rng = np.random.default_rng(1)
    g = random_gaussian(rng, 3)
    x = rng.standard_normal((5, 3))
    np.testing.assert_allclose(g.logpdf(x), stats.multivariate_normal(g.mean, g.cov).logpdf(x), rtol=1e-12)
    t = StudentTSpec.from_scale(4.5, g.mean, g.cov)
    np.testing.assert_allclose(t.logpdf(x), stats.multivariate_t(g.mean, g.cov, df=4.5).logpdf(x), rtol=1e-12)


def test_identical_pair_estimators_zero():
    pair = DensityPair.from_specs(gauss([0.0, 1.0]), gauss([0.0, 1.0]))
    for est in (tv_mc(pair, 1000, 1), hellinger_sq_mc(pair, 1000, 1), kl_mc(pair, 1000, 1), renyi_alpha_mc(pair, 0.3, 1000, 1)):
        assert est.value == 0.0


def test_hellinger_mc_known_pair():
    est = hellinger_sq_mc(DensityPair.from_specs(gauss(0.0), gauss(1.0)), 100_000, 3)
    assert abs(est.value - H2_N01_N11) < 3 * est.std_error


def test_renyi_half_known_pair():
    # the 2(1 - e^{-1/8}) value stated alongside this example is half of D_1/2; see the notes on conventions
    est = renyi_alpha_mc(DensityPair.from_specs(gauss(0.0), gauss(1.0)), 0.5, 100_000, 4)
    assert abs(est.value - D_HALF_N01_N11) < 3 * est.std_error


def test_renyi_half_is_twice_l2_hellinger():
    pair = DensityPair.from_specs(gauss(0.0), gauss(1.0))
    r = renyi_alpha_mc(pair, 0.5, 20_000, 5)
    h = hellinger_sq_mc(pair, 20_000, 5)
    # D_1/2 = 2 * integral (sqrt p - sqrt q)^2 = 4 (1 - BC), term by term on shared draws
    assert abs(r.value - 4.0 * h.value) < 1e-12


def test_kl_known_pair():
    est = kl_mc(DensityPair.from_specs(gauss(0.0), gauss(1.0, 2.0)), 100_000, 6)
    # KL(N(1,2) || N(0,1)) = (2 + 1 - 1 - log 2) / 2
    assert abs(est.value - 0.5 * (2.0 - math.log(2.0))) < 3 * est.std_error


def test_alpha_endpoints_rejected():
    pair = DensityPair.from_specs(gauss(0.0), gauss(1.0))
    for a in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValidationError):
            renyi_alpha_mc(pair, a, 1000, 0)


def test_min_samples():
    pair = DensityPair.from_specs(gauss(0.0), gauss(1.0))
    with pytest.raises(ValidationError):
        tv_mc(pair, 99, 0)


def test_nonfinite_exclusion():
    base = gauss(0.0)

    def noisy(x):
        out = base.logpdf(x)
        out[:5] = np.nan
        return out

    lr = log_ratio_samples(DensityPair(noisy, base.logpdf, base.sample, 1), 1000, 0)
    assert lr.shape == (995,)

    def broken(x):
        out = base.logpdf(x)
        out[:20] = np.inf
        return out

    with pytest.raises(NumericalError):
        log_ratio_samples(DensityPair(broken, base.logpdf, base.sample, 1), 1000, 0)


def test_tv_hellinger_inequalities_known_pair():
    pair = DensityPair.from_specs(gauss(0.0), gauss(1.5))
    tv = tv_mc(pair, 50_000, 7)
    h2 = hellinger_sq_mc(pair, 50_000, 7)
    se = math.hypot(tv.std_error, h2.std_error)
    assert tv.value <= math.sqrt(h2.value * (2 - h2.value)) + 3 * se
    assert tv.value <= math.sqrt(2 * h2.value) + 3 * se



def test_tv_far_apart_pair_is_near_one():
    # ratio-based |r - 1| / 2 is heavy-tailed here; the bounded integrand must not be
    pair = DensityPair.from_specs(gauss(0.0), gauss(5.0))
    tv = tv_mc(pair, 20_000, 3)
    exact = 2 * stats.norm.cdf(2.5) - 1
    assert abs(tv.value - exact) <= 3 * tv.std_error + 1e-12
    assert tv.std_error < 1e-3

def test_hellinger_gaussian_identical_and_scalar():
    g = random_gaussian(np.random.default_rng(2), 3)
    assert hellinger_sq_gaussian(g, g) == 0.0
    assert abs(hellinger_sq_gaussian(gauss(0.0), gauss(1.0)) - H2_N01_N11) < 1e-15


def test_hellinger_gaussian_vs_mc_3d():
    rng = np.random.default_rng(11)
    g1, g2 = random_gaussian(rng, 3), random_gaussian(rng, 3)
    est = hellinger_sq_mc(DensityPair.from_specs(g1, g2), 100_000, 12)
    assert abs(hellinger_sq_gaussian(g1, g2) - est.value) < 3 * est.std_error


def test_hellinger_gaussian_dimension_mismatch():
    with pytest.raises(ValidationError):
        hellinger_sq_gaussian(gauss([0.0]), gauss([0.0, 0.0]))


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_hellinger_gaussian_symmetry_and_range(p, seed):
    rng = np.random.default_rng(seed)
    g1, g2 = random_gaussian(rng, p), random_gaussian(rng, p)
    h12 = hellinger_sq_gaussian(g1, g2)
    assert h12 == hellinger_sq_gaussian(g2, g1)
    assert 0.0 <= h12 <= 1.0


@given(st.integers(1, 4), st.integers(0, 2**31))
def test_quasi_triangle(p, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_gaussian(rng, p) for _ in range(3))
    assert hellinger_sq_gaussian(a, c) <= 2 * hellinger_sq_gaussian(a, b) + 2 * hellinger_sq_gaussian(b, c) + 1e-15


def test_gprior_pair_values():
    assert hellinger_sq_gprior_pair(0.0, 5.0, 3) == 0.0
    assert abs(hellinger_sq_gprior_pair(0.5, 0.0, 2) - H2_PAIR_HALF_P2) < 1e-15
    assert hellinger_sq_gprior_pair(1 - 1e-15, 0.0, 2) > 0.9999
    with pytest.raises(ValidationError):
        hellinger_sq_gprior_pair(1.0, 0.0, 2)


@given(st.floats(0.0, 0.999), st.integers(1, 8), st.floats(0.0, 500.0), st.integers(0, 2**31))
def test_gprior_pair_equals_gaussian(omega, p, q, seed):
    rng = np.random.default_rng(seed)
    # well-conditioned (X'X)^{-1}; b' G b = q exactly through the shared factor
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.exp(rng.uniform(math.log(0.1), math.log(10.0), p))
    Ginv = (Q * s) @ Q.T
    Ginv = 0.5 * (Ginv + Ginv.T)
    z = rng.standard_normal(p)
    b = Q @ (np.sqrt(s) * z * math.sqrt(q) / np.linalg.norm(z))
    sigma2 = float(rng.uniform(0.2, 3.0))
    n_w = GaussianSpec.from_cov((1 - omega) * b, Ginv, (1 - omega) * sigma2)
    n_0 = GaussianSpec.from_cov(b, Ginv, sigma2)
    assert abs(hellinger_sq_gprior_pair(omega, q / sigma2, p) - hellinger_sq_gaussian(n_w, n_0)) < 1e-12


def test_t_vs_gaussian_limit_and_methods():
    t_big = StudentTSpec.from_scale(1e6, [0.0], [[1.0]])
    assert hellinger_sq_t_vs_gaussian(t_big, gauss(0.0), "quadrature_1d").value < 1e-3
    t5 = StudentTSpec.from_scale(5.0, [0.0], [[1.0]])
    quad = hellinger_sq_t_vs_gaussian(t5, gauss(0.0), "quadrature_1d")
    assert abs(quad.value - H2_T5_N01) < 1e-10
    mc = hellinger_sq_t_vs_gaussian(t5, gauss(0.0), "mc", m=100_000, seed=8)
    assert abs(mc.value - quad.value) < 3 * mc.std_error + quad.std_error


def test_t_vs_gaussian_far_apart():
    t = StudentTSpec.from_scale(30.0, [20.0], [[1.0]])
    assert hellinger_sq_t_vs_gaussian(t, gauss(0.0), "quadrature_1d").value > 0.999
    # heavy t5 tails keep BC ~ 2e-3 at distance 20, but the limit is still 1
    vals = [hellinger_sq_t_vs_gaussian(StudentTSpec.from_scale(5.0, [d], [[1.0]]), gauss(0.0), "quadrature_1d").value for d in (5, 20, 80, 320)]
    assert all(b > a for a, b in zip(vals, vals[1:])) and vals[-1] > 0.9999


def test_t_vs_gaussian_errors():
    t = StudentTSpec.from_scale(5.0, [0.0, 0.0], np.eye(2))
    with pytest.raises(ValidationError):
        hellinger_sq_t_vs_gaussian(t, gauss([0.0, 0.0]), "quadrature_1d")
    with pytest.raises(ValidationError):
        hellinger_sq_t_vs_gaussian(t, gauss([0.0, 0.0]), "simpson")


def test_alpha_tv_bound_cases():
    same = DensityPair.from_specs(gauss(0.0), gauss(0.0))
    assert check_alpha_tv_bound(same, 0.5, 1000, 0).passed
    pair = DensityPair.from_specs(gauss(0.0), gauss(3.0))
    for alpha in np.arange(1, 10) / 10:
        chk = check_alpha_tv_bound(pair, alpha, 20_000, 9)
        assert chk.passed and chk.margin >= 0


def test_lemma1_chain_single_pair():
    res = lemma1_chain(DensityPair.from_specs(gauss([0.0, 0.5]), gauss([1.0, 0.0], 1.5)), np.arange(1, 10) / 10, 50_000, 10)
    assert all(c.passed for c in res["alpha_tv"].values())
    assert res["tv_hellinger"].passed and res["tv_hellinger_sharp"].passed and res["half_identity"].passed
    # D_1/2 = 2 H^2 <= 2 H for the L2 Hellinger distance H <= sqrt(2)
    d_half = res["renyi"][0.5].value
    assert d_half <= 2 * math.sqrt(4 * res["h2"].value) + 1e-12
