"""Product-moment (pMoM) nonlocal prior and its fixed-model posterior.

Prior density, for ``r = 1, 2, ...``::

    d_p (2 pi)^(-p/2) (tau s2)^(-rp - p/2) |A|^(1/2) exp(-b^T A b / (2 tau s2)) prod b_i^(2r)

Posterior for a fixed model ``k`` (known variance)::

    Q_k^-1  prod b_i^(2r)  N(b; b_tilde, s2 C^-1),   C = X_k^T X_k + A_k / tau,
    b_tilde = C^-1 X_k^T Y,   Q_k = E_{N(b_tilde, s2 C^-1)} prod b_i^(2r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._rng import as_generator
from .divergence import DensityPair, EstimateWithError, GaussianSpec, hellinger_sq_mc
from .errors import NumericalError, ValidationError
from .regression import RegressionData, fit

_BATCH = 100_000


@dataclass(frozen=True)
class PMomConfig:
    r: int = 1
    tau: float = 1.0
    A: np.ndarray | None = None
    sigma2: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.r, (int, np.integer)) and self.r >= 1):
            raise ValidationError(f"r must be a positive integer, got {self.r!r}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")
        if self.A is not None:
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError as exc:
                raise ValidationError("A must be symmetric positive definite") from exc

    def scale_matrix(self, p: int) -> np.ndarray:
        if self.A is None:
            return np.eye(p)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape != (p, p):
            raise ValidationError(f"A has shape {A.shape}, expected {(p, p)}")
        return A


def _double_factorial_odd(r: int) -> int:
    return math.prod(range(2 * r - 1, 0, -2))


def moment_constant(mean, cov, r: int, m: int = 10_000, seed=0, rel_tol: float = 0.01, max_samples: int = 10_000_000) -> EstimateWithError:
    """Monte Carlo ``E prod x_i^(2r)`` for ``x ~ N(mean, cov)``.

    The sample is doubled until the relative standard error drops below
    ``rel_tol``.
    """
    if m < 10_000:
        raise ValidationError(f"need m >= 10^4 draws, got {m}")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    try:
        F = np.linalg.cholesky(np.atleast_2d(np.asarray(cov, dtype=float)))
    except np.linalg.LinAlgError as exc:
        raise ValidationError("covariance is not positive definite") from exc
    rng = as_generator(seed)
    total = 0
    s1 = s2 = 0.0
    target = m
    while True:
        while total < target:
            size = min(_BATCH, target - total)
            x = mean + rng.standard_normal((size, mean.size)) @ F.T
            vals = np.prod(x * x, axis=1) ** r
            s1 += float(vals.sum())
            s2 += float((vals * vals).sum())
            total += size
        est = s1 / total
        var = max(s2 / total - est * est, 0.0) * total / (total - 1)
        se = math.sqrt(var / total)
        if est > 0 and se <= rel_tol * est:
            return EstimateWithError(est, se, total)
        if 2 * target > max_samples:
            raise NumericalError("moment constant did not reach the relative error target", {"samples": total, "estimate": est, "std_error": se, "rel_tol": rel_tol})
        target *= 2


@lru_cache(maxsize=64)
def _log_dp_general(a_bytes: bytes, p: int, r: int, seed: int) -> float:
    A = np.frombuffer(a_bytes, dtype=float).reshape(p, p)
    q = moment_constant(np.zeros(p), np.linalg.inv(A), r, m=10_000, seed=seed)
    return -math.log(q.value)


def log_dp(cfg: PMomConfig, p: int, seed: int = 0) -> float:
    """Log normalising constant; exact for ``A = I``, Monte Carlo otherwise."""
    if cfg.A is None:
        return -p * math.log(_double_factorial_odd(cfg.r))
    A = np.ascontiguousarray(cfg.scale_matrix(p), dtype=float)
    return _log_dp_general(A.tobytes(), p, cfg.r, seed)


def pmom_log_prior(beta, cfg: PMomConfig, seed: int = 0):
    """Normalised log prior density; ``-inf`` wherever a coordinate is zero."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    p = beta.shape[1]
    A = cfg.scale_matrix(p)
    ts2 = cfg.tau * cfg.sigma2
    _sign, logdet_a = np.linalg.slogdet(A)
    quad = np.einsum("ij,jk,ik->i", beta, A, beta)
    with np.errstate(divide="ignore"):
        log_prod = 2 * cfg.r * np.sum(np.log(np.abs(beta)), axis=1)
    out = (
        log_dp(cfg, p, seed)
        - 0.5 * p * math.log(2.0 * math.pi)
        - (cfg.r * p + 0.5 * p) * math.log(ts2)
        + 0.5 * logdet_a
        - quad / (2.0 * ts2)
        + log_prod
    )
    return out


@dataclass(frozen=True)
class PMomModel:
    k: tuple
    C: np.ndarray
    beta_tilde: np.ndarray
    Q: EstimateWithError
    r: int
    sigma2: float

    @property
    def log_normalizer(self) -> float:
        return math.log(self.Q.value)

    @property
    def proposal(self) -> GaussianSpec:
        """``N(b_tilde, s2 C^-1)``."""
        return GaussianSpec.from_cov(self.beta_tilde, np.linalg.inv(self.C), self.sigma2)


def build_pmom_model(data: RegressionData, cfg: PMomConfig, k=None, m: int = 10_000, seed=0) -> PMomModel:
    k = tuple(range(data.p)) if k is None else tuple(sorted(k))
    if not k or k[0] < 0 or k[-1] >= data.p:
        raise ValidationError(f"model indices {k} out of range for p = {data.p}")
    Xk = data.X[:, list(k)]
    A = cfg.scale_matrix(data.p)[np.ix_(k, k)]
    C = Xk.T @ Xk + A / cfg.tau
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("C_k is not positive definite") from exc
    beta_tilde = np.linalg.solve(C, Xk.T @ data.Y)
    Q = moment_constant(beta_tilde, cfg.sigma2 * np.linalg.inv(C), cfg.r, m=m, seed=seed)
    return PMomModel(k, C, beta_tilde, Q, cfg.r, cfg.sigma2)


def pmom_posterior_logdensity(beta_k, model: PMomModel, cfg: PMomConfig | None = None):
    beta_k = np.atleast_2d(np.asarray(beta_k, dtype=float))
    with np.errstate(divide="ignore"):
        log_prod = 2 * model.r * np.sum(np.log(np.abs(beta_k)), axis=1)
    return log_prod + model.proposal.logpdf(beta_k) - model.log_normalizer


def snis_expectation(func, model: PMomModel, m: int, seed) -> EstimateWithError:
    """Posterior expectation of ``func`` by self-normalised importance sampling
    from ``N(b_tilde, s2 C^-1)`` with weights ``prod b_i^(2r)``."""
    x = model.proposal.sample(m, seed)
    w = np.prod(x * x, axis=1) ** model.r
    f = np.asarray(func(x), dtype=float)
    w_sum = w.sum()
    mu = float(np.sum(w * f) / w_sum)
    se = float(math.sqrt(np.sum(w * w * (f - mu) ** 2)) / w_sum)
    return EstimateWithError(mu, se, m)


def bvm_target(data_t: RegressionData, sigma2: float) -> GaussianSpec:
    """``N(beta_hat_t, s2 (X_t^T X_t)^-1)``."""
    return GaussianSpec.from_cov(data_t.beta_hat, np.linalg.inv(data_t.gram), sigma2)


def pmom_bvm_hellinger(model: PMomModel, data_t: RegressionData, cfg: PMomConfig, m: int, seed) -> EstimateWithError:
    """``1 - BC`` between the pMoM posterior of the true model and its BvM Gaussian."""
    if data_t.p != len(model.k):
        raise ValidationError("data_t must hold exactly the columns of the model")
    target = bvm_target(data_t, cfg.sigma2)
    pair = DensityPair(lambda b: pmom_posterior_logdensity(b, model), target.logpdf, target.sample, data_t.p)
    return hellinger_sq_mc(pair, m, seed)


@dataclass(frozen=True)
class ClosenessDiagnostics:
    shift_quadform: float
    det_ratio_1: float
    det_ratio_2: float

    @property
    def h2_mean_shift(self) -> float:
        """``H^2(N(beta_hat, s2 C^-1), N(beta_tilde, s2 C^-1))`` for unit variance."""
        return -math.expm1(-self.shift_quadform / 8.0)

    @property
    def h2_covariance(self) -> float:
        """``H^2(N(m, s2 C^-1), N(m, s2 (X^T X)^-1))``."""
        return -math.expm1(-0.25 * (math.log(self.det_ratio_1) + math.log(self.det_ratio_2)))


def closeness_diagnostics(model: PMomModel, data_t: RegressionData, cfg: PMomConfig | None = None) -> ClosenessDiagnostics:
    """Shift ``(b_tilde - b_hat)^T C (b_tilde - b_hat)`` and the two determinant ratios
    ``|C (C^-1 + G^-1) / 2|`` and ``|G (C^-1 + G^-1) / 2|`` with ``G = X_t^T X_t``."""
    G = data_t.gram
    C = model.C
    diff = model.beta_tilde - data_t.beta_hat
    shift = float(diff @ C @ diff)
    avg = 0.5 * (np.linalg.inv(C) + np.linalg.inv(G))
    _s1, ld1 = np.linalg.slogdet(C @ avg)
    _s2, ld2 = np.linalg.slogdet(G @ avg)
    return ClosenessDiagnostics(shift, math.exp(ld1), math.exp(ld2))


def fit_true_model(data: RegressionData, k) -> RegressionData:
    return fit(data.X[:, list(k)], data.Y)
