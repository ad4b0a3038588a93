"""Linear-model data generation, OLS quantities and the high-probability
events that bracket the projection statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ._rng import as_generator
from .errors import NumericalError, ValidationError

DESIGN_MODES = ("iid_gaussian", "orthogonalized")
_MAX_DESIGN_RETRIES = 5


def _cholesky(gram: np.ndarray, what: str = "X^T X") -> np.ndarray:
    try:
        factor = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of {what} failed", {"shape": gram.shape}) from exc
    if not np.all(np.isfinite(factor)) or np.min(np.diag(factor)) <= 0.0:
        raise NumericalError(f"Cholesky factor of {what} is degenerate", {"shape": gram.shape})
    return factor


def _full_rank(X: np.ndarray) -> bool:
    try:
        L = _cholesky(X.T @ X)
    except NumericalError:
        return False
    d = np.diag(L)
    # reject numerically rank-deficient designs as well as exact failures
    return bool(d.min() > 1e-8 * d.max())


def generate_design(n: int, p: int, mode: str = "orthogonalized", seed=0) -> np.ndarray:
    """Draw an ``n x p`` full-column-rank design.

    ``orthogonalized`` returns ``sqrt(n) * Q`` with ``Q`` the thin QR factor of a
    Gaussian matrix, so ``X^T X = n I`` up to rounding.
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(p, (int, np.integer))):
        raise ValidationError("n and p must be integers")
    if not n > p >= 1:
        raise ValidationError(f"need n > p >= 1, got n={n}, p={p}")
    if mode not in DESIGN_MODES:
        raise ValidationError(f"unknown design mode {mode!r}; expected one of {DESIGN_MODES}")
    rng = as_generator(seed)
    X = rng.standard_normal((n, p))
    for _ in range(_MAX_DESIGN_RETRIES + 1):
        if mode == "orthogonalized":
            Q, _r = np.linalg.qr(X)
            cand = Q * math.sqrt(n)
        else:
            cand = X
        if _full_rank(cand):
            return cand
        X = X + 1e-3 * rng.standard_normal((n, p))
    raise NumericalError("could not generate a full-rank design", {"n": n, "p": p, "retries": _MAX_DESIGN_RETRIES})


def calibrate_beta0(X: np.ndarray, target: float, direction=None) -> np.ndarray:
    """Scale ``direction`` (all-ones by default) so that ``b^T X^T X b == target``."""
    if not target > 0:
        raise ValidationError(f"target must be positive, got {target}")
    X = np.asarray(X, dtype=float)
    v = np.ones(X.shape[1]) if direction is None else np.asarray(direction, dtype=float)
    if v.shape != (X.shape[1],):
        raise ValidationError(f"direction must have length {X.shape[1]}")
    Xv = X @ v
    quad = float(Xv @ Xv)
    if not quad > 0:
        raise ValidationError("direction has zero quadratic form v^T X^T X v")
    return v * math.sqrt(target / quad)


@dataclass(frozen=True)
class TruthSpec:
    beta0: np.ndarray
    sigma0: float
    signal: float

    @classmethod
    def from_design(cls, X, beta0, sigma0: float) -> "TruthSpec":
        if not sigma0 > 0:
            raise ValidationError("sigma0 must be positive")
        beta0 = np.asarray(beta0, dtype=float)
        Xb = np.asarray(X, dtype=float) @ beta0
        signal = float(Xb @ Xb)
        if not signal > 0:
            raise ValidationError("truth must have positive signal beta0^T X^T X beta0")
        return cls(beta0=beta0, sigma0=float(sigma0), signal=signal)


def simulate_response(X, beta0, sigma0: float, seed=0, exact: bool = False) -> np.ndarray:
    """``Y = X beta0 + sigma0 z``; ``exact=True`` gives the noiseless response."""
    if not sigma0 > 0:
        raise ValidationError(f"sigma0 must be positive, got {sigma0}")
    mean = np.asarray(X, dtype=float) @ np.asarray(beta0, dtype=float)
    if exact:
        return mean
    rng = as_generator(seed)
    return mean + sigma0 * rng.standard_normal(mean.shape[0])


@dataclass(frozen=True)
class RegressionData:
    """A fitted design/response pair with cached OLS quantities.

    ``gram_factor`` is the lower Cholesky factor ``L`` of ``X^T X = L L^T``.
    ``q_proj = Y^T P_X Y`` and ``q_resid = Y^T (I - P_X) Y``.
    """

    X: np.ndarray
    Y: np.ndarray
    beta_hat: np.ndarray
    q_proj: float
    q_resid: float
    gram_factor: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return self.gram_factor @ self.gram_factor.T

    @property
    def logdet_gram(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.gram_factor))))

    @property
    def whitened_beta_hat(self) -> np.ndarray:
        """``L^T beta_hat``; its squared norm is ``q_proj``."""
        return self.gram_factor.T @ self.beta_hat


def fit(X, Y) -> RegressionData:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 1 or X.shape[0] != Y.shape[0]:
        raise ValidationError(f"incompatible shapes X{X.shape}, Y{Y.shape}")
    n, p = X.shape
    if not n > p >= 1:
        raise ValidationError(f"need n > p >= 1, got n={n}, p={p}")
    L = _cholesky(X.T @ X)
    xty = X.T @ Y
    z = solve_triangular(L, xty, lower=True)
    beta_hat = solve_triangular(L.T, z, lower=False)
    resid = Y - X @ beta_hat
    return RegressionData(
        X=X,
        Y=Y,
        beta_hat=beta_hat,
        q_proj=float(z @ z),
        q_resid=float(resid @ resid),
        gram_factor=L,
    )


def event_sn(data: RegressionData, sigma2: float, l1: float, l2: float) -> bool:
    """Membership in ``{l1 n <= Y^T P_X Y / sigma2 <= l2 n}`` (closed interval)."""
    if not 0 < l1 < l2:
        raise ValidationError(f"need 0 < l1 < l2, got l1={l1}, l2={l2}")
    ratio = data.q_proj / sigma2
    return bool(l1 * data.n <= ratio <= l2 * data.n)


def event_sn2(data: RegressionData, sigma0_sq: float) -> bool:
    """Residual bracket ``(n-p) -+ sqrt(n-p) log(n-p)`` for ``Y^T (I-P_X) Y / sigma0^2``."""
    dof = data.n - data.p
    if dof < 2:
        return False
    half = math.sqrt(dof) * math.log(dof)
    ratio = data.q_resid / sigma0_sq
    return bool(dof - half <= ratio <= dof + half)


def event_sn_tilde(data: RegressionData, sigma0_sq: float, l1: float, l2: float) -> bool:
    return event_sn(data, sigma0_sq, l1, l2) and event_sn2(data, sigma0_sq)
