"""Closed forms for the value of a trailing-window selling option with an
exponential horizon.

Everything here lives in the standardized model S = exp(X), X_t = W_t + c*t
with c = -1/2 unless stated otherwise.  The quantities are excursion rates of
X below its running maximum: nu is the total rate at which excursions end (by
reaching age a or by an independent Exp(eta) mark), split into nu_a (age) and
nu_alpha (mark), and psi0/psi1 are the defective laws of the depth Y at an
age-a ending, unweighted and exp(Y)-weighted.  K(q) is the value of the
threshold rule "sell at the first age-a excursion with depth below q", whose
maximizer q* satisfies the fixed point K(q*) = exp(-q*).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

SQRT_2PI = math.sqrt(2.0 * math.pi)

# q* search: log-spaced magnitudes to bracket the stationarity sign change
_Q_GRID_LO = 1e-6
_Q_GRID_HI = 8.0
_Q_GRID_N = 2000
_FIXED_POINT_TOL = 1e-6


class NumericalDegeneracyError(RuntimeError):
    """A quantity that the theory guarantees positive came out otherwise."""


class ThresholdSearchError(NumericalDegeneracyError):
    """The q* search failed to bracket or certify an interior maximum."""


def normal_pdf(x):
    """Standard normal density, elementwise."""
    return np.exp(-0.5 * np.square(x)) / SQRT_2PI


def normal_cdf(x):
    """Standard normal CDF, elementwise, absolute error below 1e-12."""
    return ndtr(x)


@dataclass(frozen=True)
class FormulaParams:
    """Window length a, horizon rate eta, and log-price drift c."""

    a: float
    eta: float
    c: float = -0.5

    def __post_init__(self):
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise ValueError(f"window length a must be positive, got {self.a}")
        if not (self.eta >= 0.0 and math.isfinite(self.eta)):
            raise ValueError(f"horizon rate eta must be nonnegative, got {self.eta}")
        if not math.isfinite(self.c):
            raise ValueError(f"drift c must be finite, got {self.c}")


@dataclass(frozen=True)
class ExcursionRates:
    beta: float
    nu: float
    nu_a: float
    nu_alpha: float


@dataclass(frozen=True)
class ThresholdSolution:
    q_star: float
    k_star: float


def excursion_rates(p: FormulaParams) -> ExcursionRates:
    """Excursion-ending rates (nu, nu_a, nu_alpha) and beta = sqrt(c^2 + 2 eta).

    eta = 0 is handled analytically (beta = |c|, nu_alpha = 0) rather than by
    cancellation of the general expressions.
    """
    a, eta, c = p.a, p.eta, p.c
    sa = math.sqrt(a)
    nu_a = (2.0 / sa) * float(normal_pdf(c * sa)) - 2.0 * c * float(normal_cdf(-c * sa))
    if eta == 0.0:
        return ExcursionRates(beta=abs(c), nu=nu_a, nu_a=nu_a, nu_alpha=0.0)
    beta = math.sqrt(c * c + 2.0 * eta)
    nu = (
        (2.0 / sa) * float(normal_pdf(beta * sa))
        + 2.0 * beta * float(normal_cdf(beta * sa))
        - c
        - beta
    )
    nu_alpha = (
        2.0 * beta * (float(normal_cdf(beta * sa)) - 0.5)
        - 2.0 * c * (float(normal_cdf(c * sa)) - 0.5)
        + (2.0 / sa) * (float(normal_pdf(beta * sa)) - float(normal_pdf(c * sa)))
    )
    return ExcursionRates(beta=beta, nu=nu, nu_a=nu_a, nu_alpha=nu_alpha)


def psi(q, p: FormulaParams):
    """Defective depth laws at an age-a excursion end: (psi0(q), psi1(q)).

    psi0(q) = e^{-eta a} P-weight of ending with depth Y < q; psi1(q) weights
    the complementary depths by e^Y.  Accepts scalar or array q <= 0.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q > 0.0):
        raise ValueError("psi is defined for q <= 0")
    a, eta, c = p.a, p.eta, p.c
    sa = math.sqrt(a)
    cb = 1.0 + c
    # arguments written as q/sa - x*sa so the q = 0 cancellations against the
    # excursion-rate terms are exact in floating point, not just to rounding
    u0 = q / sa - c * sa
    u1 = q / sa - cb * sa
    psi0 = math.exp(-eta * a) * (
        (2.0 / sa) * normal_pdf(u0) - 2.0 * c * normal_cdf(u0)
    )
    psi1 = math.exp((c + 0.5 - eta) * a) * (
        (2.0 / sa) * (normal_pdf(cb * sa) - normal_pdf(u1))
        + 2.0 * cb * (normal_cdf(cb * sa) - normal_cdf(-u1))
    )
    if psi0.ndim == 0:
        return float(psi0), float(psi1)
    return psi0, psi1


def a_quantities(q: float, p: FormulaParams):
    """Coefficients (A0, A_minus, A_plus) of the rule-value decomposition.

    All three share the denominator nu - 1, which must be positive.
    """
    r = excursion_rates(p)
    den = r.nu - 1.0
    if den <= 0.0:
        raise NumericalDegeneracyError(
            f"nu - 1 = {den!r} is not positive at a={p.a}, eta={p.eta}, c={p.c}"
        )
    psi0, psi1 = psi(q, p)
    a0 = (r.nu_alpha + (1.0 - math.exp(-p.eta * p.a)) * r.nu_a) / den
    return a0, psi0 / den, psi1 / den


def rule_value(q: float, p: FormulaParams) -> float:
    """Value K(q) of the depth-threshold rule, for c = -1/2.

    K(q) = (nu_alpha + (1 - e^{-eta a}) nu_a + psi0(q)) / (nu - 1 - psi1(q)),
    whose denominator is strictly positive for c = -1/2.
    """
    if p.c != -0.5:
        raise ValueError("rule_value requires the standardized drift c = -1/2")
    r = excursion_rates(p)
    psi0, psi1 = psi(q, p)
    num = r.nu_alpha + (1.0 - math.exp(-p.eta * p.a)) * r.nu_a + psi0
    den = r.nu - 1.0 - psi1
    if den <= 0.0:
        raise NumericalDegeneracyError(
            f"rule-value denominator {den!r} not positive at a={p.a}, eta={p.eta}, q={q}"
        )
    return num / den


def _rule_value_grid(q: np.ndarray, p: FormulaParams, r: ExcursionRates) -> np.ndarray:
    """Vectorized K over an array of thresholds, rates precomputed."""
    psi0, psi1 = psi(q, p)
    num = r.nu_alpha + (1.0 - math.exp(-p.eta * p.a)) * r.nu_a + psi0
    den = r.nu - 1.0 - psi1
    if np.any(den <= 0.0):
        raise NumericalDegeneracyError(
            f"rule-value denominator not positive somewhere at a={p.a}, eta={p.eta}"
        )
    return num / den


def _stationarity(q, p: FormulaParams, r: ExcursionRates):
    """den(q) - e^q num(q): positive left of the optimal threshold, negative
    right of it, strictly decreasing.  K'(q) shares its sign, so its unique
    root is the maximizer and the fixed point K(q*) = exp(-q*) at once."""
    psi0, psi1 = psi(q, p)
    num = r.nu_alpha + (1.0 - math.exp(-p.eta * p.a)) * r.nu_a + psi0
    den = r.nu - 1.0 - psi1
    if np.any(np.asarray(den) <= 0.0):
        raise NumericalDegeneracyError(
            f"rule-value denominator not positive at a={p.a}, eta={p.eta}"
        )
    return den - np.exp(q) * num


def optimal_threshold(p: FormulaParams) -> ThresholdSolution:
    """Solve for the optimal depth threshold q* < 0.

    Maximizing K directly is ill-conditioned where the maximum is flat (large
    eta), so the solver brackets the sign change of the stationarity function
    on a log-spaced grid and root-finds it; that root is well-conditioned
    everywhere.  The solution is certified by |K(q*) - exp(-q*)| <= 1e-6; a
    sign change outside the grid or a failed certificate raises
    ThresholdSearchError rather than extrapolating.
    """
    if p.c != -0.5:
        raise ValueError("optimal_threshold requires the standardized drift c = -1/2")
    if p.eta <= 0.0:
        raise ValueError("optimal_threshold requires eta > 0")
    r = excursion_rates(p)
    qs = -np.logspace(math.log10(_Q_GRID_HI), math.log10(_Q_GRID_LO), _Q_GRID_N)
    f = _stationarity(qs, p, r)
    if f[0] <= 0.0 or f[-1] > 0.0:
        raise ThresholdSearchError(
            f"optimal threshold outside the search range [{-_Q_GRID_HI}, "
            f"{-_Q_GRID_LO}] at a={p.a}, eta={p.eta}"
        )
    j = int(np.flatnonzero((f[:-1] > 0.0) & (f[1:] <= 0.0))[0])
    q_star = float(brentq(lambda q: float(_stationarity(q, p, r)),
                          qs[j], qs[j + 1], xtol=1e-13, rtol=8.9e-16))
    k_star = rule_value(q_star, p)
    if abs(k_star - math.exp(-q_star)) > _FIXED_POINT_TOL:
        raise ThresholdSearchError(
            f"fixed-point certificate failed at a={p.a}, eta={p.eta}: "
            f"K={k_star!r}, exp(-q*)={math.exp(-q_star)!r}"
        )
    return ThresholdSolution(q_star=q_star, k_star=k_star)


def lambda_max(a: float) -> float:
    """E[exp(max of X on [0, a])] for X = W - t/2:
    (2 + a/2) Phi(sqrt(a)/2) + sqrt(a) phi(sqrt(a)/2)."""
    if not (a >= 0.0 and math.isfinite(a)):
        raise ValueError(f"window length a must be nonnegative, got {a}")
    if a == 0.0:
        return 1.0
    sa2 = math.sqrt(a) / 2.0
    return (2.0 + a / 2.0) * float(normal_cdf(sa2)) + math.sqrt(a) * float(normal_pdf(sa2))
