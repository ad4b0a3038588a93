"""Chi-squared tail bounds and the exact CDFs used to check them.

Noncentrality follows the mean-shift convention: ``chi2_p(lam)`` has mean
``p + lam``.  The noncentral distribution is evaluated as a Poisson(lam/2)
mixture of central chi-squared laws with ``p + 2j`` degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammainc, gammaincc

from .errors import NumericalError, ValidationError

MAX_POISSON_TERMS = 1_000_000
# smallest c1 dominating the fraction bound on p in {1,5}, lam in {20..200}, w in {.25,.5,.75}
# is ~27.73 (see calibrate_fraction_constant); rounded up
DEFAULT_C1 = 28.0
CALIBRATION_P = (1, 5)
CALIBRATION_LAMBDA = tuple(range(20, 201, 20))
CALIBRATION_W = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class ChiSqParams:
    p: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.p > 0:
            raise ValidationError(f"degrees of freedom must be positive, got {self.p}")
        if not self.lam >= 0:
            raise ValidationError(f"noncentrality must be >= 0, got {self.lam}")

    @property
    def mean(self) -> float:
        return self.p + self.lam


def _positive(name, value):
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value}")


# -- bounds ---------------------------------------------------------------


def central_two_sided_bound(p: float, a: float, clamp: bool = True) -> float:
    """``P(|chi2_p - p| > a) <= 2 exp(-a^2 / (4p))``."""
    _positive("a", a)
    _positive("p", p)
    raw = 2.0 * math.exp(-a * a / (4.0 * p))
    return min(raw, 1.0) if clamp else raw


def noncentral_upper_bound(p: float, lam: float, c: float) -> float:
    """``P(chi2_p(lam) - (p + lam) > c) <= exp(-p/2 {x - log(1 + x)})``, ``x = c / (p + lam)``."""
    _positive("c", c)
    ChiSqParams(p, lam)
    x = c / (p + lam)
    return math.exp(-0.5 * p * (x - math.log1p(x)))


def noncentral_fraction_bound(p: float, lam: float, w: float, c1: float = DEFAULT_C1) -> float:
    """``P(chi2_p(lam) <= w lam) <= c1 / lam * exp(-lam (1 - w)^2 / 8)``."""
    if not w < 1:
        raise ValidationError(f"w must be < 1, got {w}")
    _positive("lambda", lam)
    _positive("c1", c1)
    return c1 / lam * math.exp(-lam * (1.0 - w) ** 2 / 8.0)


def central_lower_bound(p: float, c: float) -> float:
    """``P(chi2_p(lam) - p <= -c) <= exp(-c^2 / (4p))`` for every ``lam >= 0``."""
    _positive("c", c)
    _positive("p", p)
    return math.exp(-c * c / (4.0 * p))


# -- exact distribution functions -----------------------------------------


def chisq_cdf(p: float, x: float) -> float:
    _positive("p", p)
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x}")
    return float(gammainc(0.5 * p, 0.5 * x))


def chisq_sf(p: float, x: float) -> float:
    _positive("p", p)
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x}")
    return float(gammaincc(0.5 * p, 0.5 * x))


def _poisson_window(mu: float, tol: float) -> tuple[np.ndarray, float]:
    """Indices carrying all but ``< tol`` of the Poisson(mu) mass."""
    if mu == 0:
        return np.array([0]), 0.0
    lo = int(stats.poisson.ppf(0.25 * tol, mu))
    hi = int(stats.poisson.isf(0.25 * tol, mu))
    while stats.poisson.sf(hi, mu) >= 0.5 * tol:
        hi += 1
    lo = max(lo - 1, 0)
    left = float(stats.poisson.cdf(lo - 1, mu)) if lo > 0 else 0.0
    missing = left + float(stats.poisson.sf(hi, mu))
    if hi - lo + 1 > MAX_POISSON_TERMS:
        raise NumericalError("Poisson series needs too many terms", {"mu": mu, "terms": hi - lo + 1, "cap": MAX_POISSON_TERMS})
    if missing >= tol:
        raise NumericalError("Poisson series truncation did not reach tolerance", {"mu": mu, "missing_mass": missing, "tol": tol})
    return np.arange(lo, hi + 1), missing


def _noncentral(p, lam, x, tol, upper: bool) -> float:
    ChiSqParams(p, lam)
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x}")
    if not 0 < tol <= 1e-6:
        raise ValidationError(f"tol must lie in (0, 1e-6], got {tol}")
    j, _missing = _poisson_window(0.5 * lam, tol)
    weights = np.exp(stats.poisson.logpmf(j, 0.5 * lam)) if lam > 0 else np.ones(1)
    fn = gammaincc if upper else gammainc
    return float(np.clip(np.sum(weights * fn(0.5 * p + j, 0.5 * x)), 0.0, 1.0))


def noncentral_chisq_cdf(p: float, lam: float, x: float, tol: float = 1e-12) -> float:
    """Poisson-mixture CDF, truncated once the neglected Poisson mass is below ``tol``."""
    return _noncentral(p, lam, x, tol, upper=False)


def noncentral_chisq_sf(p: float, lam: float, x: float, tol: float = 1e-12) -> float:
    """Survival function; accurate in the far upper tail where ``1 - cdf`` is not."""
    return _noncentral(p, lam, x, tol, upper=True)


# -- exact probabilities matching each bound ------------------------------


def exact_two_sided(p: float, a: float) -> float:
    """``P(|chi2_p - p| > a)``."""
    upper = chisq_sf(p, p + a)
    lower = chisq_cdf(p, p - a) if p - a > 0 else 0.0
    return upper + lower


def exact_noncentral_upper(p: float, lam: float, c: float) -> float:
    return noncentral_chisq_sf(p, lam, p + lam + c)


def exact_fraction(p: float, lam: float, w: float) -> float:
    return noncentral_chisq_cdf(p, lam, max(w * lam, 0.0))


def exact_lower(p: float, lam: float, c: float) -> float:
    """``P(chi2_p(lam) - p <= -c)``."""
    return noncentral_chisq_cdf(p, lam, p - c) if p - c > 0 else 0.0


# -- tables ---------------------------------------------------------------

TAIL_COLUMNS = ("lemma", "p", "lambda", "param", "value", "exact", "bound", "dominated")
DEFAULT_GRID = (1.0, 5.0, 20.0)


def tail_rows(p: float, lam: float, grid=DEFAULT_GRID) -> list[dict]:
    """Exact-vs-bound rows for one ``(p, lam)``.

    The central two-sided bound only concerns ``lam = 0`` and is emitted only
    then; the other two bounds are emitted for every ``lam``.
    """
    rows = []
    for v in grid:
        if lam == 0:
            rows.append(("central_two_sided", "a", v, exact_two_sided(p, v), central_two_sided_bound(p, v, clamp=False)))
        rows.append(("noncentral_upper", "c", v, exact_noncentral_upper(p, lam, v), noncentral_upper_bound(p, lam, v)))
        rows.append(("central_lower", "c", v, exact_lower(p, lam, v), central_lower_bound(p, v)))
    return [
        dict(zip(TAIL_COLUMNS, (lemma, p, lam, param, v, ex, bd, ex <= bd)))
        for lemma, param, v, ex, bd in rows
    ]


def calibrate_fraction_constant(ps=CALIBRATION_P, lams=CALIBRATION_LAMBDA, ws=CALIBRATION_W) -> list[dict]:
    """Smallest ``c1`` per cell for which the fraction bound dominates the exact probability."""
    rows = []
    for p in ps:
        for lam in lams:
            for w in ws:
                exact = exact_fraction(p, lam, w)
                rows.append({"p": p, "lambda": lam, "w": w, "exact": exact, "c1_min": exact * lam * math.exp(lam * (1.0 - w) ** 2 / 8.0)})
    return rows
