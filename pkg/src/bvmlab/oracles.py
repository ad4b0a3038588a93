"""Brute-force reference posteriors for one-coefficient models.

These integrate the *raw* hierarchical joint density (likelihood, conditional
g-prior on beta, Beta prior on w, optionally the inverse-gamma prior on the
variance) over dense grids.  None of the conjugate reductions used in
:mod:`bvmlab.gprior` appear here, which is what makes them useful as checks.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError


def beta_grid(data, halfwidth_sd: float = 12.0, size: int = 4001, sigma2: float | None = None) -> np.ndarray:
    if data.p != 1:
        raise ValidationError("brute-force oracles handle p = 1 only")
    g = float(data.X[:, 0] @ data.X[:, 0])
    s2 = sigma2 if sigma2 is not None else (data.q_resid + 1.0) / max(data.n - 1, 1)
    sd = math.sqrt(s2 / g)
    centre = float(data.beta_hat[0])
    half = halfwidth_sd * sd + 0.5 * abs(centre)
    return np.linspace(centre - half, centre + half, size)


def _log_prior_terms(beta, log_w, log_1mw, gram, sigma2, a, b):
    # w = 1/(1+g)  =>  g = (1-w)/w ;  beta | g ~ N(0, g sigma2 / gram)
    log_g = log_1mw - log_w
    var = np.exp(log_g) * sigma2 / gram
    return -0.5 * np.log(2.0 * math.pi * var) - 0.5 * beta**2 / var + (a - 1.0) * log_w + (b - 1.0) * log_1mw


def _omega_grid(size):
    u = np.linspace(-32.0, 32.0, size)
    log_w = -np.logaddexp(0.0, -u)
    log_1mw = -np.logaddexp(0.0, u)
    # dw = w (1 - w) du
    return log_w, log_1mw, log_w + log_1mw + math.log(u[1] - u[0])


def brute_force_beta_fixed(data, sigma2: float, a: float, b: float, grid: np.ndarray, omega_size: int = 3001) -> np.ndarray:
    """Normalised density of ``beta`` on ``grid`` under the known-variance model."""
    x = data.X[:, 0]
    Y = data.Y
    gram = float(x @ x)
    log_w, log_1mw, log_jac = _omega_grid(omega_size)
    rss = float(Y @ Y) - 2.0 * grid * float(x @ Y) + grid**2 * gram
    log_lik = -0.5 * rss / sigma2
    out = np.empty(grid.shape)
    for i, bval in enumerate(grid):
        lp = _log_prior_terms(bval, log_w, log_1mw, gram, sigma2, a, b) + log_jac
        out[i] = log_lik[i] + logsumexp(lp)
    return _normalise(out, grid)


def brute_force_beta_unknown(data, a: float, b: float, c: float, d: float, grid: np.ndarray, omega_size: int = 801, sigma_size: int = 201) -> np.ndarray:
    """Normalised density of ``beta`` with ``sigma2 ~ IG(c/2, d/2)`` integrated out numerically."""
    x = data.X[:, 0]
    Y = data.Y
    n = data.n
    gram = float(x @ x)
    log_w, log_1mw, log_jac_w = _omega_grid(omega_size)
    centre = math.log((data.q_resid + d) / (n + c))
    t = np.linspace(centre - 4.0, centre + 4.0, sigma_size)
    s2 = np.exp(t)
    # IG(c/2, d/2) density in sigma2, times d sigma2 = sigma2 dt
    log_ig = -(0.5 * c + 1.0) * t - 0.5 * d / s2 + t + math.log(t[1] - t[0])
    rss = float(Y @ Y) - 2.0 * grid * float(x @ Y) + grid**2 * gram
    out = np.empty(grid.shape)
    for i, bval in enumerate(grid):
        lik = -0.5 * n * t - 0.5 * rss[i] / s2  # (sigma2)^(-n/2) exp(-rss / 2 sigma2)
        lp = _log_prior_terms(bval, log_w[:, None], log_1mw[:, None], gram, s2[None, :], a, b)
        total = lp + log_jac_w[:, None] + (lik + log_ig)[None, :]
        out[i] = logsumexp(total)
    return _normalise(out, grid)


def _normalise(log_density, grid):
    h = grid[1] - grid[0]
    log_z = logsumexp(log_density) + math.log(h)
    return np.exp(log_density - log_z)


def grid_tv(dens1: np.ndarray, dens2: np.ndarray, grid: np.ndarray) -> float:
    h = grid[1] - grid[0]
    return 0.5 * float(np.sum(np.abs(dens1 - dens2))) * h
