"""Hierarchical g-prior posteriors.

Model: ``Y | beta ~ N(X beta, s2 I)``, ``beta | g ~ N(0, g s2 (X^T X)^-1)`` and
a beta-prime prior on ``g``, i.e. ``w = 1/(1+g) ~ Beta(a, b)``.  With known
``s2`` the shrinkage weight has posterior kernel

    w^(a+p/2-1) (1-w)^(b-1) exp(-w Y^T P_X Y / (2 s2))

and with ``s2 ~ IG(c/2, d/2)`` integrated out

    w^(a+p/2-1) (1-w)^(b-1) (d + Y^T(I-P_X)Y + w Y^T P_X Y)^(-(n+c)/2).

Conditionally on ``w`` the coefficients are Gaussian (known variance) or
multivariate t with ``n + c`` degrees of freedom (unknown variance); the
marginal posterior of ``beta`` is the mixture over the ``w`` posterior, which
is represented on a quadrature grid.

Grid
----
Integrals over ``w`` use the substitution ``w = 1/(1 + exp(-u))``: the
integrand in ``u`` is smooth and decays at both ends, so the trapezoid rule
on a uniform ``u`` grid converges geometrically.  The nodes are geometrically
spaced near 0 (where the posterior mass concentrates, at scale
``(a + p/2)/s``) and near 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from ._rng import as_generator
from .divergence import EstimateWithError, GaussianSpec, StudentTSpec, hellinger_sq_gprior_pair_array
from .errors import NumericalError, ValidationError
from .regression import RegressionData

_LOG_2PI = math.log(2.0 * math.pi)
_EDGE = 1e-12
_CERT_TOL = 1e-6
_MAX_NODES = 2**16
# nodes whose normalised weight is below exp(-46) ~ 1e-20 are dropped from mixtures
_PRUNE_LOG = 46.0
_CHUNK = 8192


@dataclass(frozen=True)
class GPriorHyper:
    """Hyperparameters; ``sigma2=None`` selects the unknown-variance model."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 1.0
    sigma2: float | None = None

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"hyperparameter {name} must be positive, got {getattr(self, name)}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def mode(self) -> str:
        return "unknown_sigma" if self.sigma2 is None else "fixed_sigma"


def _log_omega_parts(u):
    """``(log w, log(1-w))`` for ``w = expit(u)`` without cancellation."""
    return -np.logaddexp(0.0, -u), -np.logaddexp(0.0, u)


def _kernel(log_w, log_1mw, w, hyper: GPriorHyper, p, n, q_proj, q_resid):
    base = (hyper.a + 0.5 * p - 1.0) * log_w + (hyper.b - 1.0) * log_1mw
    if hyper.sigma2 is not None:
        return base - w * q_proj / (2.0 * hyper.sigma2)
    return base - 0.5 * (n + hyper.c) * np.log(hyper.d + q_resid + w * q_proj)


def omega_log_density(omega, hyper: GPriorHyper, data: RegressionData):
    """Unnormalised log posterior kernel of the shrinkage weight."""
    omega = np.asarray(omega, dtype=float)
    if np.any((omega <= 0.0) | (omega >= 1.0)):
        raise ValidationError("omega must lie strictly inside (0, 1)")
    out = _kernel(np.log(omega), np.log1p(-omega), omega, hyper, data.p, data.n, data.q_proj, data.q_resid)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OmegaPosterior:
    """Normalised posterior of ``w`` on a grid.

    ``log_weights`` are normalised quadrature weights (they sum to one), so
    ``sum(exp(log_weights) * f(nodes))`` approximates ``E[f(w) | Y]``.
    """

    hyper: GPriorHyper
    p: int
    n: int
    q_proj: float
    q_resid: float
    nodes: np.ndarray
    log_weights: np.ndarray
    log_normalizer: float
    u_range: tuple[float, float]
    certificate: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.hyper.mode

    @property
    def s(self) -> float | None:
        """``Y^T P_X Y / (2 s2)`` in the known-variance model."""
        return None if self.hyper.sigma2 is None else self.q_proj / (2.0 * self.hyper.sigma2)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> float:
        return float(np.sum(self.weights * self.nodes))

    def log_kernel_u(self, u):
        """Log integrand in the ``u`` parametrisation (kernel times ``dw/du``)."""
        lw, l1 = _log_omega_parts(u)
        return _kernel(lw, l1, np.exp(lw), self.hyper, self.p, self.n, self.q_proj, self.q_resid) + lw + l1

    def active(self):
        """Nodes and log-weights with non-negligible mass."""
        keep = self.log_weights > np.max(self.log_weights) - _PRUNE_LOG
        lw = self.log_weights[keep]
        return self.nodes[keep], lw - logsumexp(lw)

    @classmethod
    def from_nodes(cls, hyper: GPriorHyper, data: RegressionData, nodes, weights=None) -> "OmegaPosterior":
        """A discrete stand-in posterior on chosen nodes (e.g. a point mass)."""
        nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
        if np.any((nodes < 0.0) | (nodes >= 1.0)):
            raise ValidationError("nodes must lie in [0, 1)")
        w = np.full(nodes.shape, 1.0 / nodes.size) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != nodes.shape or np.any(w <= 0):
            raise ValidationError("weights must be positive and match the nodes")
        w = w / w.sum()
        return cls(hyper, data.p, data.n, data.q_proj, data.q_resid, nodes, np.log(w), 0.0, (math.nan, math.nan), {"discrete": True})


def _effective_rate(hyper: GPriorHyper, data: RegressionData) -> float:
    if hyper.sigma2 is not None:
        return data.q_proj / (2.0 * hyper.sigma2)
    return 0.5 * (data.n + hyper.c) * data.q_proj / (hyper.d + data.q_resid)


def _u_range(hyper: GPriorHyper, data: RegressionData) -> tuple[float, float]:
    alpha = hyper.a + 0.5 * data.p
    u_lo = math.log(_EDGE) - math.log1p(-_EDGE)
    rate = _effective_rate(hyper, data)
    if rate > 0:
        # keep (w_lo * rate)^alpha below ~1e-16 when the mass sits very close to 0
        u_lo = min(u_lo, -math.log(rate) - 37.0 / alpha)
    return u_lo, math.log1p(-_EDGE) - math.log(_EDGE)


def _trapezoid(post_args, u_lo, u_hi, K):
    u = np.linspace(u_lo, u_hi, K)
    h = u[1] - u[0]
    log_f = post_args(u)
    log_h = np.full(K, math.log(h))
    log_h[0] = log_h[-1] = math.log(0.5 * h)
    log_terms = log_f + log_h
    log_z = float(logsumexp(log_terms))
    return u, log_terms - log_z, log_z


def build_omega_posterior(hyper: GPriorHyper, data: RegressionData, K: int = 1024) -> OmegaPosterior:
    """Grid posterior of ``w`` with a ``K`` vs ``2K`` normaliser certificate."""
    if K < 64:
        raise ValidationError(f"need K >= 64 nodes, got {K}")
    u_lo, u_hi = _u_range(hyper, data)

    def log_f(u):
        lw, l1 = _log_omega_parts(u)
        return _kernel(lw, l1, np.exp(lw), hyper, data.p, data.n, data.q_proj, data.q_resid) + lw + l1

    history = []
    k = K
    while True:
        u, log_w, log_z = _trapezoid(log_f, u_lo, u_hi, k)
        _u2, _lw2, log_z2 = _trapezoid(log_f, u_lo, u_hi, 2 * k)
        diff = abs(log_z2 - log_z)
        history.append((k, diff))
        if not np.isfinite(log_z):
            raise NumericalError("omega posterior normaliser is not finite", {"K": k, "mode": hyper.mode})
        if diff < _CERT_TOL:
            break
        if 2 * k > _MAX_NODES:
            raise NumericalError(
                "omega grid failed its refinement certificate",
                {"history": history, "u_range": (u_lo, u_hi), "q_proj": data.q_proj, "q_resid": data.q_resid, "p": data.p},
            )
        k *= 2
    cert = {"K": k, "log_normalizer_2K": log_z2, "delta": diff, "passed": True}
    return OmegaPosterior(hyper, data.p, data.n, data.q_proj, data.q_resid, expit(u), log_w, log_z, (u_lo, u_hi), cert)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def omega_tail_prob(post: OmegaPosterior, threshold: float) -> float:
    """``P(w > threshold | Y)`` by panelled Gauss-Legendre in ``u``."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    if post.certificate.get("discrete"):
        return float(np.sum(post.weights[post.nodes > threshold]))
    u_t = math.log(threshold) - math.log1p(-threshold)
    u_lo, u_hi = post.u_range
    if u_t >= u_hi:
        return 0.0
    a = max(u_t, u_lo)
    n_panels = max(1, int(math.ceil((u_hi - a) / 0.5)))
    edges = np.linspace(a, u_hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    lw = (np.log(half)[:, None] + np.log(_GL_W)[None, :]).ravel()
    log_tail = float(logsumexp(post.log_kernel_u(u) + lw)) - post.log_normalizer
    return float(min(1.0, math.exp(log_tail)))


@dataclass(frozen=True)
class ThresholdRule:
    """``t_n = xi_n p log n`` with ``xi_n = log n`` unless overridden."""

    xi: str = "log"
    xi_const: float = 1.0

    def xi_n(self, n: int) -> float:
        return math.log(n) if self.xi == "log" else self.xi_const

    def t_n(self, n: int, p: int) -> float:
        return self.xi_n(n) * p * math.log(n)

    def threshold(self, n: int, p: int) -> float:
        return self.t_n(n, p) / n

    def is_degenerate(self, n: int, p: int) -> bool:
        return not 0.0 < self.threshold(n, p) < 1.0

    def rate_condition(self, n: int, p: int) -> bool:
        """Whether ``t_n >= sqrt(n) log n``, the growth assumed for the unknown-variance tail."""
        return self.t_n(n, p) >= math.sqrt(n) * math.log(n)


def tail_prob_at_rule(post: OmegaPosterior, rule: ThresholdRule) -> tuple[float, bool]:
    """Tail probability at ``t_n/n``; a threshold outside (0,1) gives ``(0.0, True)``."""
    if rule.is_degenerate(post.n, post.p):
        return 0.0, True
    return omega_tail_prob(post, rule.threshold(post.n, post.p)), False


# -- conditionals of beta ------------------------------------------------


def _inv_gram_factor(data: RegressionData) -> np.ndarray:
    L_inv = np.linalg.inv(data.gram_factor)
    return np.linalg.cholesky(L_inv.T @ L_inv)


def _check_omega(omega):
    if not 0.0 <= omega < 1.0:
        raise ValidationError(f"omega must lie in [0, 1), got {omega}")


def beta_conditional_fixed(omega: float, data: RegressionData, sigma2: float) -> GaussianSpec:
    """``N((1-w) beta_hat, (1-w) s2 (X^T X)^-1)``."""
    _check_omega(omega)
    return GaussianSpec((1.0 - omega) * data.beta_hat, (1.0 - omega) * sigma2, _inv_gram_factor(data))


def t_scale(omega, data: RegressionData, hyper: GPriorHyper):
    """Scalar multiplier of ``(X^T X)^-1`` in the conditional t law."""
    return (1.0 - omega) * (hyper.d + data.q_resid + omega * data.q_proj) / (data.n + hyper.c)


def beta_conditional_unknown(omega: float, data: RegressionData, hyper: GPriorHyper) -> StudentTSpec:
    """``t_{n+c}((1-w) beta_hat, (1-w)(d + R + w Q)/(n+c) (X^T X)^-1)``."""
    _check_omega(omega)
    return StudentTSpec(float(data.n + hyper.c), (1.0 - omega) * data.beta_hat, float(t_scale(omega, data, hyper)), _inv_gram_factor(data))


def bvm_target(data: RegressionData, sigma2: float) -> GaussianSpec:
    return GaussianSpec(data.beta_hat.copy(), float(sigma2), _inv_gram_factor(data))


# -- mixture evaluation ----------------------------------------------------
#
# Every conditional shares the shape (X^T X)^-1 and is centred at (1-w) beta_hat,
# so with y = L^T (beta - beta_hat) the Mahalanobis distance of component w is
#     M(w) = |y|^2 + 2 w y.c + w^2 |c|^2,   c = L^T beta_hat, |c|^2 = q_proj.
# Component log densities below omit the common  -p/2 log(2 pi) + 1/2 log|X^T X|.


def _component_logpdf(uu, vv, nodes, data: RegressionData, hyper: GPriorHyper):
    p = data.p
    w = nodes[None, :]
    maha = uu[:, None] + 2.0 * w * vv[:, None] + w * w * data.q_proj
    if hyper.sigma2 is not None:
        var = (1.0 - w) * hyper.sigma2
        return -0.5 * p * np.log(var) - 0.5 * maha / var
    nu = data.n + hyper.c
    scale = t_scale(w, data, hyper)
    const = gammaln(0.5 * (nu + p)) - gammaln(0.5 * nu) - 0.5 * p * math.log(0.5 * nu)
    return const - 0.5 * p * np.log(scale) - 0.5 * (nu + p) * np.log1p(maha / (nu * scale))


def _projections(beta, data: RegressionData):
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    y = (beta - data.beta_hat) @ data.gram_factor
    c = data.whitened_beta_hat
    return np.sum(y * y, axis=1), y @ c


def beta_marginal_logdensity(beta, post: OmegaPosterior, data: RegressionData, hyper: GPriorHyper | None = None):
    """Log density of the mixture posterior of ``beta`` at each row of ``beta``."""
    hyper = post.hyper if hyper is None else hyper
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    nodes, logw = post.active()
    common = -0.5 * data.p * _LOG_2PI + 0.5 * data.logdet_gram
    out = np.empty(beta.shape[0])
    for start in range(0, beta.shape[0], _CHUNK):
        uu, vv = _projections(beta[start:start + _CHUNK], data)
        comp = _component_logpdf(uu, vv, nodes, data, hyper)
        out[start:start + _CHUNK] = logsumexp(comp + logw[None, :], axis=1) + common
    return out


def _target_draws(data: RegressionData, target_sigma2: float, m: int, seed):
    """Whitened draws from ``N(beta_hat, target_sigma2 (X^T X)^-1)``."""
    rng = as_generator(seed)
    z = rng.standard_normal((m, data.p))
    root = math.sqrt(target_sigma2)
    zz = np.sum(z * z, axis=1)
    uu = target_sigma2 * zz
    vv = root * (z @ data.whitened_beta_hat)
    log_q = -0.5 * data.p * math.log(target_sigma2) - 0.5 * zz
    return uu, vv, log_q


def _bvm_terms(data, post, hyper, target_sigma2, m, seed):
    """Per-draw Hellinger and Jensen integrands under the BvM target."""
    nodes, logw = post.active()
    uu, vv, log_q = _target_draws(data, target_sigma2, m, seed)
    h2 = np.empty(m)
    jensen = np.empty(m)
    for start in range(0, m, _CHUNK):
        sl = slice(start, start + _CHUNK)
        lr = _component_logpdf(uu[sl], vv[sl], nodes, data, hyper) - log_q[sl, None]
        bad = ~np.isfinite(lr)
        if bad.any():
            lr = np.where(bad, -np.inf, lr)
        mix = logsumexp(lr + logw[None, :], axis=1)
        h2[sl] = -np.expm1(0.5 * mix)
        jensen[sl] = 1.0 - np.sum(np.exp(logw[None, :] + 0.5 * lr), axis=1)
    finite = np.isfinite(h2)
    if (~finite).sum() > 0.01 * m:
        raise NumericalError("too many non-finite posterior/target ratios", {"bad": int((~finite).sum()), "m": m})
    return h2[finite], jensen[finite]


def _estimate(terms):
    m = terms.shape[0]
    return EstimateWithError(float(np.mean(terms)), float(np.std(terms, ddof=1)) / math.sqrt(m), m)


def _resolve_target(hyper, target_sigma2):
    if target_sigma2 is None:
        if hyper.sigma2 is None:
            raise ValidationError("the unknown-variance model needs the true variance for the BvM target")
        return hyper.sigma2
    return target_sigma2


def bvm_hellinger(data: RegressionData, hyper: GPriorHyper, post: OmegaPosterior, m: int, seed, target_sigma2: float | None = None) -> EstimateWithError:
    """``1 - BC`` between the mixture posterior of ``beta`` and ``N(beta_hat, s0^2 (X^T X)^-1)``.

    Draws come from the Gaussian target.  ``target_sigma2`` defaults to the
    known variance; the unknown-variance model requires it (the true ``s0^2``).
    """
    if m < 1000:
        raise ValidationError(f"need m >= 1000 draws, got {m}")
    h2, _ = _bvm_terms(data, post, hyper, _resolve_target(hyper, target_sigma2), m, seed)
    return _estimate(h2)


def jensen_upper_bound(post: OmegaPosterior, data: RegressionData, sigma2: float | None = None) -> float:
    """Posterior average of the closed-form ``H^2(N_w, N_0)`` (known variance)."""
    if post.mode != "fixed_sigma":
        raise ValidationError("closed-form Jensen bound needs the known-variance model")
    sigma2 = post.hyper.sigma2 if sigma2 is None else sigma2
    nodes, logw = post.active()
    h2 = hellinger_sq_gprior_pair_array(nodes, data.q_proj / sigma2, data.p)
    return float(np.sum(np.exp(logw) * h2))


def jensen_upper_bound_mc(post: OmegaPosterior, data: RegressionData, target_sigma2: float, m: int, seed) -> EstimateWithError:
    """Posterior average of ``H^2(conditional_w, target)`` by Monte Carlo.

    With the same ``seed`` as :func:`bvm_hellinger` the draws are shared.
    """
    _, jensen = _bvm_terms(data, post, post.hyper, target_sigma2, m, seed)
    return _estimate(jensen)


def jensen_split(post: OmegaPosterior, data: RegressionData, threshold: float, sigma2: float | None = None) -> tuple[float, float]:
    """The two pieces ``sup_{w <= t} H^2(N_w, N_0)`` and ``P(w > t | Y)``."""
    sigma2 = post.hyper.sigma2 if sigma2 is None else sigma2
    # H^2(N_w, N_0) is increasing in w, so the sup sits at the threshold
    sup_part = float(hellinger_sq_gprior_pair_array(np.array([threshold]), data.q_proj / sigma2, data.p)[0])
    return sup_part, omega_tail_prob(post, threshold)
