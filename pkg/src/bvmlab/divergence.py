"""Divergences between densities: closed forms for Gaussians and Monte Carlo
estimators for general pairs.

Conventions
-----------
``hellinger_sq`` everywhere means ``1 - integral sqrt(p q)`` (so it lies in
``[0, 1]``).  The unnormalised L2 form ``integral (sqrt p - sqrt q)^2`` equals
twice that; it is the form for which ``D_{1/2} = 2 H^2`` and ``TV <= H`` hold,
and :func:`lemma1_chain` uses it explicitly.

Monte Carlo estimators always sample from the *second* density ``q`` and work
with log-ratios ``log p(x) - log q(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from ._rng import as_generator
from .errors import NumericalError, ValidationError

_LOG_2PI = math.log(2.0 * math.pi)
MAX_EXCLUDED_FRACTION = 0.01


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    std_error: float
    n_samples: int

    def __iter__(self):
        yield self.value
        yield self.std_error


def _factor(matrix: np.ndarray, what: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {matrix.shape}")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not symmetric positive definite") from exc


def _mean_estimate(values: np.ndarray) -> EstimateWithError:
    m = values.shape[0]
    sd = float(np.std(values, ddof=1)) if m > 1 else 0.0
    return EstimateWithError(float(np.mean(values)), sd / math.sqrt(m), m)


@dataclass(frozen=True)
class GaussianSpec:
    """``N(mean, cov_scale * F F^T)`` with ``F`` the lower Cholesky factor of the shape."""

    mean: np.ndarray
    cov_scale: float
    shape_factor: np.ndarray

    def __post_init__(self):
        if not self.cov_scale > 0:
            raise ValidationError(f"cov_scale must be positive, got {self.cov_scale}")
        if self.shape_factor.shape != (self.dim, self.dim):
            raise ValidationError("shape factor does not match mean dimension")
        if not np.isfinite(self.logdet):
            raise NumericalError("covariance log-determinant is not finite")

    @classmethod
    def from_cov(cls, mean, cov, scale: float = 1.0) -> "GaussianSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, float(scale), _factor(cov, "covariance shape"))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cov(self) -> np.ndarray:
        return self.cov_scale * (self.shape_factor @ self.shape_factor.T)

    @property
    def logdet(self) -> float:
        return self.dim * math.log(self.cov_scale) + 2.0 * float(np.sum(np.log(np.diag(self.shape_factor))))

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = solve_triangular(self.shape_factor, (x - self.mean).T, lower=True)
        maha = np.sum(z * z, axis=0) / self.cov_scale
        return -0.5 * (self.dim * _LOG_2PI + self.logdet + maha)

    def sample(self, m: int, seed) -> np.ndarray:
        rng = as_generator(seed)
        z = rng.standard_normal((m, self.dim))
        return self.mean + math.sqrt(self.cov_scale) * (z @ self.shape_factor.T)


@dataclass(frozen=True)
class StudentTSpec:
    """Multivariate ``t_df(location, scale * F F^T)``."""

    df: float
    location: np.ndarray
    scale: float
    shape_factor: np.ndarray

    def __post_init__(self):
        if not self.df > 0:
            raise ValidationError(f"degrees of freedom must be positive, got {self.df}")
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")

    @classmethod
    def from_scale(cls, df, location, shape, scale: float = 1.0) -> "StudentTSpec":
        location = np.atleast_1d(np.asarray(location, dtype=float))
        return cls(float(df), location, float(scale), _factor(shape, "t scale shape"))

    @property
    def dim(self) -> int:
        return self.location.shape[0]

    @property
    def logdet(self) -> float:
        return self.dim * math.log(self.scale) + 2.0 * float(np.sum(np.log(np.diag(self.shape_factor))))

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p, nu = self.dim, self.df
        z = solve_triangular(self.shape_factor, (x - self.location).T, lower=True)
        maha = np.sum(z * z, axis=0) / self.scale
        const = gammaln(0.5 * (nu + p)) - gammaln(0.5 * nu) - 0.5 * p * math.log(nu * math.pi) - 0.5 * self.logdet
        return const - 0.5 * (nu + p) * np.log1p(maha / nu)

    def sample(self, m: int, seed) -> np.ndarray:
        rng = as_generator(seed)
        z = rng.standard_normal((m, self.dim)) @ self.shape_factor.T
        w = rng.chisquare(self.df, size=m) / self.df
        return self.location + math.sqrt(self.scale) * z / np.sqrt(w)[:, None]


@dataclass(frozen=True)
class DensityPair:
    """Two densities with a seeded sampler for the second one (the base measure)."""

    log_density_p: Callable[[np.ndarray], np.ndarray]
    log_density_q: Callable[[np.ndarray], np.ndarray]
    sampler_q: Callable[[int, object], np.ndarray]
    dim: int

    @classmethod
    def from_specs(cls, p_spec, q_spec) -> "DensityPair":
        if p_spec.dim != q_spec.dim:
            raise ValidationError("densities have different dimensions")
        return cls(p_spec.logpdf, q_spec.logpdf, q_spec.sample, q_spec.dim)


def log_ratio_samples(pair: DensityPair, m: int, seed) -> np.ndarray:
    """Finite log-ratios ``log p - log q`` at ``m`` draws from ``q``.

    ``-inf`` (``p`` vanishes) is a legitimate value and is kept.  NaN and
    ``+inf`` are excluded; more than 1% exclusions is an error.
    """
    if m < 100:
        raise ValidationError(f"need at least 100 samples, got {m}")
    x = pair.sampler_q(m, seed)
    lr = np.asarray(pair.log_density_p(x), dtype=float) - np.asarray(pair.log_density_q(x), dtype=float)
    bad = np.isnan(lr) | (lr == np.inf)
    n_bad = int(bad.sum())
    if n_bad > MAX_EXCLUDED_FRACTION * m:
        raise NumericalError("too many non-finite log density ratios", {"excluded": n_bad, "m": m})
    return lr[~bad]


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}; use kl_mc for the endpoints")


def renyi_terms(lr: np.ndarray, alpha: float) -> np.ndarray:
    _check_alpha(alpha)
    return -np.expm1(alpha * lr) / (alpha * (1.0 - alpha))


def tv_terms(lr: np.ndarray) -> np.ndarray:
    # TV = E_q[(1 - p/q)_+]; same mean as E_q|p/q - 1| / 2 but bounded by 1
    return np.maximum(-np.expm1(lr), 0.0)


def hellinger_sq_terms(lr: np.ndarray) -> np.ndarray:
    return -np.expm1(0.5 * lr)


def renyi_alpha_mc(pair: DensityPair, alpha: float, m: int, seed) -> EstimateWithError:
    """``D_alpha = (1 - E_q[(p/q)^alpha]) / (alpha (1 - alpha))``."""
    _check_alpha(alpha)
    return _mean_estimate(renyi_terms(log_ratio_samples(pair, m, seed), alpha))


def tv_mc(pair: DensityPair, m: int, seed) -> EstimateWithError:
    return _mean_estimate(tv_terms(log_ratio_samples(pair, m, seed)))


def hellinger_sq_mc(pair: DensityPair, m: int, seed) -> EstimateWithError:
    return _mean_estimate(hellinger_sq_terms(log_ratio_samples(pair, m, seed)))


def kl_mc(pair: DensityPair, m: int, seed) -> EstimateWithError:
    """``KL(q, p) = E_q[log(q/p)]``."""
    lr = log_ratio_samples(pair, m, seed)
    if np.any(np.isneginf(lr)):
        return EstimateWithError(math.inf, 0.0, lr.shape[0])
    return _mean_estimate(-lr)


def hellinger_sq_gaussian(g1: GaussianSpec, g2: GaussianSpec) -> float:
    """Closed-form ``1 - BC`` between two Gaussians, evaluated in log space."""
    if g1.dim != g2.dim:
        raise ValidationError("Gaussians have different dimensions")
    p = g1.dim
    delta = g1.mean - g2.mean
    if np.array_equal(g1.shape_factor, g2.shape_factor):
        # common shape: only the scalar multipliers differ
        s1, s2 = g1.cov_scale, g2.cov_scale
        s_avg = 0.5 * (s1 + s2)
        z = solve_triangular(g1.shape_factor, delta, lower=True)
        log_bc = 0.25 * p * (math.log(s1) + math.log(s2)) - 0.5 * p * math.log(s_avg) - float(z @ z) / (8.0 * s_avg)
    else:
        avg = 0.5 * (g1.cov + g2.cov)
        try:
            L = np.linalg.cholesky(avg)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("average covariance is not positive definite") from exc
        ld_avg = 2.0 * float(np.sum(np.log(np.diag(L))))
        z = solve_triangular(L, delta, lower=True)
        log_bc = 0.25 * (g1.logdet + g2.logdet) - 0.5 * ld_avg - float(z @ z) / 8.0
    return float(-math.expm1(min(log_bc, 0.0)))


def hellinger_sq_gprior_pair(omega: float, q_over_sigma2: float, p: int) -> float:
    """``1 - BC`` between ``N((1-w) b, (1-w) s^2 G^-1)`` and ``N(b, s^2 G^-1)``
    where ``q_over_sigma2 = b^T G b / s^2``."""
    if not 0.0 <= omega < 1.0:
        raise ValidationError(f"omega must lie in [0, 1), got {omega}")
    if q_over_sigma2 < 0 or p < 1:
        raise ValidationError("need q_over_sigma2 >= 0 and p >= 1")
    log_bc = (
        0.25 * p * math.log1p(-omega)
        - 0.5 * p * math.log1p(-0.5 * omega)
        - omega * omega * q_over_sigma2 / (4.0 * (2.0 - omega))
    )
    return float(-math.expm1(log_bc))


def hellinger_sq_gprior_pair_array(omega: np.ndarray, q_over_sigma2: float, p: int) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    log_bc = 0.25 * p * np.log1p(-omega) - 0.5 * p * np.log1p(-0.5 * omega) - omega**2 * q_over_sigma2 / (4.0 * (2.0 - omega))
    return -np.expm1(log_bc)


def hellinger_sq_t_vs_gaussian(t: StudentTSpec, g: GaussianSpec, method: str = "mc", m: int = 100_000, seed=0):
    """``1 - BC`` between a Student-t and a Gaussian.

    ``quadrature_1d`` (p = 1 only) integrates ``sqrt(t g)`` adaptively and
    reports the quadrature error estimate as ``std_error``; ``mc`` samples
    from the Gaussian.
    """
    if t.dim != g.dim:
        raise ValidationError("t and Gaussian have different dimensions")
    if method == "mc":
        return hellinger_sq_mc(DensityPair.from_specs(t, g), m, seed)
    if method != "quadrature_1d":
        raise ValidationError(f"unknown method {method!r}")
    if t.dim != 1:
        raise ValidationError("quadrature_1d needs a one-dimensional pair")

    def integrand(x):
        pt = np.array([[x]])
        return math.exp(0.5 * (t.logpdf(pt)[0] + g.logpdf(pt)[0]))

    mu_t, mu_g = float(t.location[0]), float(g.mean[0])
    sd_t = math.sqrt(t.scale) * float(t.shape_factor[0, 0])
    sd_g = math.sqrt(g.cov_scale) * float(g.shape_factor[0, 0])
    # sqrt(t g) decays at least like sqrt of the Gaussian
    width = 80.0 * max(sd_t, sd_g)
    lo, hi = min(mu_t, mu_g) - width, max(mu_t, mu_g) + width
    breaks = sorted({lo, mu_t, 0.5 * (mu_t + mu_g), mu_g, hi})
    total, err, evals = 0.0, 0.0, 0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        val, abserr, info = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-11, limit=200, full_output=1)[:3]
        total += val
        err += abserr
        evals += info["neval"]
    # mass outside [lo, hi] is below exp(-width^2 / (8 sd^2)) for the Gaussian factor
    return EstimateWithError(float(max(0.0, 1.0 - total)), float(err), evals)


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    lhs: float
    rhs: float
    std_error: float

    @property
    def margin(self) -> float:
        return self.rhs + 3.0 * self.std_error - self.lhs


def _paired_check(lhs_terms: np.ndarray, rhs_terms: np.ndarray) -> BoundCheck:
    diff = _mean_estimate(lhs_terms - rhs_terms)
    lhs, rhs = float(np.mean(lhs_terms)), float(np.mean(rhs_terms))
    return BoundCheck(bool(diff.value <= 3.0 * diff.std_error), lhs, rhs, diff.std_error)


def check_alpha_tv_bound(pair: DensityPair, alpha: float, m: int, seed) -> BoundCheck:
    """``D_alpha <= TV / (alpha (1 - alpha))`` on shared samples, 3 SE slack."""
    lr = log_ratio_samples(pair, m, seed)
    return _paired_check(renyi_terms(lr, alpha), tv_terms(lr) / (alpha * (1.0 - alpha)))


def lemma1_chain(pair: DensityPair, alphas, m: int, seed) -> dict:
    """All inequalities linking TV, Hellinger and the alpha-divergences on one
    shared sample.

    Returns a dict with ``alpha_tv`` (alpha -> BoundCheck), ``tv_hellinger``
    (TV <= L2 Hellinger distance), ``tv_hellinger_sharp``
    (TV <= sqrt(h2 (2 - h2))) and ``half_identity`` (|D_1/2 - 2 H_L2^2| within
    3 SE), plus the point estimates.
    """
    lr = log_ratio_samples(pair, m, seed)
    n_used = lr.shape[0]
    tv_t = tv_terms(lr)
    h2_t = hellinger_sq_terms(lr)
    tv_est = _mean_estimate(tv_t)
    h2_est = _mean_estimate(h2_t)
    out = {"tv": tv_est, "h2": h2_est, "alpha_tv": {}, "renyi": {}}
    for alpha in alphas:
        d_t = renyi_terms(lr, alpha)
        out["renyi"][alpha] = _mean_estimate(d_t)
        out["alpha_tv"][alpha] = _paired_check(d_t, tv_t / (alpha * (1.0 - alpha)))

    # delta method for sqrt(2 h2): d/dh sqrt(2h) = 1/sqrt(2h)
    h_l2 = math.sqrt(max(2.0 * h2_est.value, 0.0))
    h_terms = h_l2 + (2.0 * h2_t - 2.0 * h2_est.value) / (2.0 * h_l2) if h_l2 > 0 else np.zeros(n_used)
    out["tv_hellinger"] = _paired_check(tv_t, h_terms)

    h = h2_est.value
    sharp = math.sqrt(max(h * (2.0 - h), 0.0))
    sharp_terms = sharp + (2.0 - 2.0 * h) * (h2_t - h) / (2.0 * sharp) if sharp > 0 else np.zeros(n_used)
    out["tv_hellinger_sharp"] = _paired_check(tv_t, sharp_terms)

    half = _mean_estimate(renyi_terms(lr, 0.5) - 2.0 * (2.0 * h2_t))
    out["half_identity"] = BoundCheck(bool(abs(half.value) <= 3.0 * half.std_error + 1e-12), half.value, 0.0, half.std_error)
    return out
