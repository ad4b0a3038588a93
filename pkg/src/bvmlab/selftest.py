"""Brute-force oracle suite run by ``bvmlab selftest``.

Each check compares a fast route against an independent slow one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import chisq, gprior, oracles
from .divergence import DensityPair, GaussianSpec, hellinger_sq_gaussian, hellinger_sq_gprior_pair, hellinger_sq_mc
from .pmom import PMomConfig, build_pmom_model, pmom_posterior_logdensity
from .regression import calibrate_beta0, fit, generate_design, simulate_response


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def small_dataset(n: int = 30, seed: int = 2024):
    X = generate_design(n, 1, "iid_gaussian", seed)
    beta0 = calibrate_beta0(X, n)
    return fit(X, simulate_response(X, beta0, 1.0, seed + 1))


def oracle_tv_fixed(data=None, sigma2: float = 1.0, size: int = 4001) -> float:
    data = data or small_dataset()
    hyper = gprior.GPriorHyper(sigma2=sigma2)
    post = gprior.build_omega_posterior(hyper, data)
    grid = oracles.beta_grid(data, size=size, sigma2=sigma2)
    ours = np.exp(gprior.beta_marginal_logdensity(grid[:, None], post, data, hyper))
    ref = oracles.brute_force_beta_fixed(data, sigma2, hyper.a, hyper.b, grid)
    return oracles.grid_tv(ours, ref, grid)


def oracle_tv_unknown(data=None, size: int = 1201) -> float:
    data = data or small_dataset()
    hyper = gprior.GPriorHyper()
    post = gprior.build_omega_posterior(hyper, data)
    grid = oracles.beta_grid(data, size=size)
    ours = np.exp(gprior.beta_marginal_logdensity(grid[:, None], post, data, hyper))
    ref = oracles.brute_force_beta_unknown(data, hyper.a, hyper.b, hyper.c, hyper.d, grid)
    return oracles.grid_tv(ours, ref, grid)


def _check_gaussian_hellinger():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 3))
    g1 = GaussianSpec.from_cov(rng.standard_normal(3), A @ A.T + np.eye(3))
    g2 = GaussianSpec.from_cov(rng.standard_normal(3), B @ B.T + np.eye(3))
    closed = hellinger_sq_gaussian(g1, g2)
    est = hellinger_sq_mc(DensityPair.from_specs(g1, g2), 100_000, 12)
    ok = abs(closed - est.value) <= 3 * est.std_error
    return CheckResult("gaussian_hellinger_vs_mc", ok, f"closed={closed:.6f} mc={est.value:.6f}+-{est.std_error:.1e}")


def _check_gprior_pair():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 6))
        omega = float(rng.uniform(0, 0.99))
        q = float(rng.uniform(0, 50))
        b = rng.standard_normal(p)
        b *= math.sqrt(q) / np.linalg.norm(b)
        mixed = GaussianSpec.from_cov((1 - omega) * b, np.eye(p), 1 - omega)
        target = GaussianSpec.from_cov(b, np.eye(p), 1.0)
        worst = max(worst, abs(hellinger_sq_gprior_pair(omega, q, p) - hellinger_sq_gaussian(mixed, target)))
    return CheckResult("gprior_pair_vs_gaussian", worst < 1e-12, f"max abs diff={worst:.1e}")


def _check_noncentral_cdf():
    worst = 0.0
    for p, lam, x in [(1, 0.5, 0.3), (4, 9, 10), (20, 50, 60), (5, 200, 150), (2, 0, 3)]:
        worst = max(worst, abs(chisq.noncentral_chisq_cdf(p, lam, x) - stats.ncx2.cdf(x, p, lam) if lam > 0 else abs(chisq.noncentral_chisq_cdf(p, lam, x) - stats.chi2.cdf(x, p))))
    return CheckResult("noncentral_cdf_vs_scipy", worst < 1e-10, f"max abs diff={worst:.1e}")


def _check_pmom_normalisation():
    X = generate_design(40, 1, "orthogonalized", 3)
    data = fit(X, simulate_response(X, np.ones(1), 1.0, 4))
    model = build_pmom_model(data, PMomConfig(), m=400_000, seed=5)
    grid = np.linspace(-6, 6, 200_001) + float(model.beta_tilde[0])
    dens = np.exp(pmom_posterior_logdensity(grid[:, None], model))
    total = float(np.sum(dens) * (grid[1] - grid[0]))
    rel = model.Q.std_error / model.Q.value
    ok = abs(total - 1.0) <= 3 * rel
    return CheckResult("pmom_posterior_normalisation", ok, f"integral={total:.6f} (Q rel se {rel:.1e})")


def run_selftest() -> list[CheckResult]:
    data = small_dataset()
    tv_f = oracle_tv_fixed(data)
    tv_u = oracle_tv_unknown(data)
    return [
        CheckResult("gprior_fixed_vs_brute_force", tv_f < 1e-3, f"TV={tv_f:.2e}"),
        CheckResult("gprior_unknown_vs_brute_force", tv_u < 1e-3, f"TV={tv_u:.2e}"),
        _check_gaussian_hellinger(),
        _check_gprior_pair(),
        _check_noncentral_cdf(),
        _check_pmom_normalisation(),
    ]
