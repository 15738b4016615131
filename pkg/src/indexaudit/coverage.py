"""Coverage-based accuracy for a published statistic judged by an audit.

Fix a reporting convention: a statistic published as theta +/- omega is "right"
when the stated interval contains the target. Calibrate the yardstick so that
an unbiased normal estimator whose central alpha-interval has half-width
exactly omega is right with probability alpha: its SD is sigma = omega / kappa
with kappa the standard normal (1 + alpha) / 2 quantile. The accuracy of any
competing estimator is then the probability its own interval of half-width
omega covers the target.

For a normal competitor with bias b and extra variance tau2 on top of nothing
(a zero-variance published number has tau2 = 0), that probability has the
closed form Phi((b + omega) / nu) - Phi((b - omega) / nu) with
nu^2 = sigma^2 + tau2. Everything in this module is a view of that one
kernel: constant coverage is tau2 = 0, unbiased coverage is b = 0, and the
two estimators replace b or tau2 with audit-based estimates and propagate the
audit's own sampling noise by the delta method.

Pure functions over frozen dataclasses; thread-safe throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from . import gaussian
from .errors import ValidationError

__all__ = [
    "EvalScheme",
    "CoverageEstimate",
    "MseEstimate",
    "BreakEvenResult",
    "kappa_quantile",
    "coverage_kernel",
    "coverage_of_constant",
    "coverage_of_unbiased",
    "estimate_coverage",
    "estimate_unbiased_coverage",
    "default_variance_of_variance",
    "mse_estimate",
    "break_even_variance",
]


def kappa_quantile(alpha: float) -> float:
    """Half-width of the central alpha-interval in SD units: Phi^-1((1+alpha)/2)."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return gaussian.quantile((1.0 + alpha) / 2.0)


@dataclass(frozen=True)
class EvalScheme:
    """An evaluation convention: confidence level alpha and half-width omega.

    ``kappa`` and ``sigma`` are derived on construction; sigma is defined as
    omega / kappa, the SD of the unbiased estimator the scheme treats as
    exactly alpha-accurate.
    """

    alpha: float
    omega: float
    kappa: float = field(init=False, default=0.0)
    sigma: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValidationError(f"omega must be a positive float, got {self.omega}")
        kappa = kappa_quantile(self.alpha)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "sigma", self.omega / kappa)


def coverage_kernel(bias, extra_variance, scheme: EvalScheme):
    """P(|theta_hat - theta| <= omega) for theta_hat ~ N(theta + bias, extra_variance).

    The single closed form behind every coverage quantity here:
    Phi((bias + omega) / nu) - Phi((bias - omega) / nu), nu^2 = sigma^2 +
    extra_variance. Accepts scalars or ndarrays (broadcast) for ``bias`` and
    ``extra_variance``.
    """
    bias_arr = np.asarray(bias, dtype=float)
    var_arr = np.asarray(extra_variance, dtype=float)
    if not np.all(np.isfinite(bias_arr)):
        raise ValidationError("bias must be finite")
    if not np.all(np.isfinite(var_arr)) or np.any(var_arr < 0.0):
        raise ValidationError("extra variance must be finite and non-negative")
    nu = np.sqrt(scheme.sigma ** 2 + var_arr)
    value = gaussian.cdf((bias_arr + scheme.omega) / nu) - gaussian.cdf((bias_arr - scheme.omega) / nu)
    if np.ndim(bias) == 0 and np.ndim(extra_variance) == 0:
        return float(value)
    return value


def coverage_of_constant(theta_star: float, theta_true: float, scheme: EvalScheme) -> float:
    """Coverage of a zero-variance published number: the kernel at tau2 = 0.

    Equals alpha exactly when theta_star is the target and decays to 0 as the
    bias grows.
    """
    return coverage_kernel(theta_star - theta_true, 0.0, scheme)


def coverage_of_unbiased(extra_variance: float, scheme: EvalScheme) -> float:
    """Coverage of an unbiased normal estimator with the given variance.

    The kernel at bias 0, which simplifies to 2 Phi(omega / tau) - 1 with
    tau^2 = sigma^2 + extra_variance.
    """
    return coverage_kernel(0.0, extra_variance, scheme)


@dataclass(frozen=True)
class CoverageEstimate:
    """A coverage point estimate with delta-method variance and normal CI.

    ``ci_clipped`` records whether the nominal interval leaked outside [0, 1]
    and was clipped. ``inputs`` echoes the numbers that produced the estimate.
    """

    value: float
    variance: float
    ci_low: float
    ci_high: float
    inputs: Mapping[str, float] = field(default_factory=dict)
    ci_clipped: bool = False

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValidationError(f"coverage estimate out of [0, 1]: {self.value}")
        if self.variance < 0.0 or not math.isfinite(self.variance):
            raise ValidationError(f"coverage variance must be non-negative, got {self.variance}")
        if not (self.ci_low <= self.value <= self.ci_high):
            raise ValidationError("coverage CI does not bracket the point estimate")
        object.__setattr__(self, "inputs", dict(self.inputs))


def _normal_ci(value: float, variance: float) -> tuple[float, float, bool]:
    half = gaussian.quantile(0.975) * math.sqrt(variance)
    low, high = value - half, value + half
    clipped = low < 0.0 or high > 1.0
    return max(low, 0.0), min(high, 1.0), clipped


def estimate_coverage(theta_star: float, theta_audit: float, audit_variance: float,
                      scheme: EvalScheme) -> CoverageEstimate:
    """Plug-in coverage of a published constant, judged by a noisy audit.

    The audit estimate replaces the unknown target in the constant-coverage
    formula. Its own variance v propagates by the delta method:
    Var = (v / sigma^2) * (phi(u + kappa) - phi(u - kappa))^2 with
    u = (theta_star - theta_audit) / sigma. The estimate never exceeds alpha,
    and at u = 0 the derivative vanishes so the variance is exactly zero.
    """
    if audit_variance < 0.0 or not math.isfinite(audit_variance):
        raise ValidationError(f"audit variance must be non-negative, got {audit_variance}")
    bias_hat = theta_star - theta_audit
    value = coverage_kernel(bias_hat, 0.0, scheme)
    u = bias_hat / scheme.sigma
    slope = gaussian.pdf(u + scheme.kappa) - gaussian.pdf(u - scheme.kappa)
    variance = (audit_variance / scheme.sigma ** 2) * slope ** 2
    low, high, clipped = _normal_ci(value, variance)
    return CoverageEstimate(
        value=value, variance=variance, ci_low=low, ci_high=high,
        inputs={
            "theta_star": theta_star,
            "theta_audit": theta_audit,
            "audit_variance": audit_variance,
            "alpha": scheme.alpha,
            "omega": scheme.omega,
        },
        ci_clipped=clipped,
    )


def estimate_unbiased_coverage(variance_estimate: float, var_of_variance: float,
                               scheme: EvalScheme) -> CoverageEstimate:
    """Coverage an unbiased estimator with the audit's variance would achieve.

    The benchmark that answers "how accurate would the audit itself be, read
    as a published number with the same +/- omega convention". Point value is
    2 Phi(omega / tau) - 1 at tau^2 = sigma^2 + variance_estimate; the
    variance of the variance estimate propagates with derivative factor
    omega^2 / (4 tau^6):
    Var = (phi(omega/tau) + phi(-omega/tau))^2 * omega^2 / (4 tau^6) * var_of_variance.
    """
    if variance_estimate < 0.0 or not math.isfinite(variance_estimate):
        raise ValidationError(
            f"variance estimate must be non-negative, got {variance_estimate}"
        )
    if var_of_variance < 0.0 or not math.isfinite(var_of_variance):
        raise ValidationError(
            f"variance of the variance must be non-negative, got {var_of_variance}"
        )
    value = coverage_kernel(0.0, variance_estimate, scheme)
    tau = math.sqrt(scheme.sigma ** 2 + variance_estimate)
    ratio = scheme.omega / tau
    slope_sq = (gaussian.pdf(ratio) + gaussian.pdf(-ratio)) ** 2
    variance = slope_sq * scheme.omega ** 2 / (4.0 * tau ** 6) * var_of_variance
    low, high, clipped = _normal_ci(value, variance)
    return CoverageEstimate(
        value=value, variance=variance, ci_low=low, ci_high=high,
        inputs={
            "variance_estimate": variance_estimate,
            "var_of_variance": var_of_variance,
            "alpha": scheme.alpha,
            "omega": scheme.omega,
        },
        ci_clipped=clipped,
    )


def default_variance_of_variance(variance_estimate: float, n_households: int) -> float:
    """Normal-theory variance of a sample variance: 2 v^2 / (n - 1)."""
    if variance_estimate < 0.0 or not math.isfinite(variance_estimate):
        raise ValidationError(
            f"variance estimate must be non-negative, got {variance_estimate}"
        )
    if n_households < 2:
        raise ValidationError(f"need at least 2 households, got {n_households}")
    return 2.0 * variance_estimate ** 2 / (n_households - 1)


class MseEstimate(NamedTuple):
    """A bias-corrected squared-error estimate; negative values are possible."""

    value: float
    is_negative: bool


def mse_estimate(theta_star: float, theta_audit: float, audit_variance: float) -> MseEstimate:
    """Unbiased MSE estimate for a published constant:
    (theta_star - theta_audit)^2 - audit_variance.

    Subtracting the audit variance removes the noise the squared difference
    picks up from the audit itself; the price is that small true biases often
    produce negative estimates, which are flagged rather than clamped.
    """
    if audit_variance < 0.0 or not math.isfinite(audit_variance):
        raise ValidationError(f"audit variance must be non-negative, got {audit_variance}")
    value = (theta_star - theta_audit) ** 2 - audit_variance
    return MseEstimate(value=value, is_negative=value < 0.0)


class BreakEvenResult(NamedTuple):
    """Variance solving coverage parity, and whether the solution was pinned at 0."""

    variance: float
    at_boundary: bool


def break_even_variance(theta_star: float, theta_true: float,
                        scheme: EvalScheme) -> BreakEvenResult:
    """How much extra variance an unbiased estimator could carry and still be
    no more accurate than the biased constant.

    Solves coverage_of_unbiased(v) = coverage_of_constant(theta_star) by
    bisection (the left side is strictly decreasing in v from alpha toward 0).
    When the constant's coverage is not strictly below alpha there is nothing
    to trade, and the boundary result (0, True) is returned. The bracket is
    narrowed to 1e-12 relative width.
    """
    target = coverage_of_constant(theta_star, theta_true, scheme)
    if target >= scheme.alpha - 1e-14:
        return BreakEvenResult(variance=0.0, at_boundary=True)
    lo = 0.0
    hi = scheme.sigma ** 2
    while coverage_of_unbiased(hi, scheme) > target:
        hi *= 2.0
        if not math.isfinite(hi):
            raise ValidationError("break-even bracket diverged")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if coverage_of_unbiased(mid, scheme) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return BreakEvenResult(variance=0.5 * (lo + hi), at_boundary=False)
