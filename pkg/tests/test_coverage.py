import math

import numpy as np
import pytest

from indexaudit import gaussian
from indexaudit.coverage import (
    BreakEvenResult,
    CoverageEstimate,
    EvalScheme,
    break_even_variance,
    coverage_kernel,
    coverage_of_constant,
    coverage_of_unbiased,
    default_variance_of_variance,
    estimate_coverage,
    estimate_unbiased_coverage,
    kappa_quantile,
    mse_estimate,
)
from indexaudit.errors import ValidationError

KAPPA_95 = 1.9599639845400538


@pytest.fixture
def scheme():
    """The working convention used throughout: 95% level, +/- 0.058."""
    return EvalScheme(alpha=0.95, omega=0.058)


# --- scheme construction -------------------------------------------------------


def test_kappa_quantile_frozen_values():
    assert kappa_quantile(0.95) == pytest.approx(KAPPA_95, rel=1e-14)
    assert kappa_quantile(0.5) == pytest.approx(0.6744897501960817, rel=1e-12)
    for bad in (0.0, 1.0, -0.3, 2.0):
        with pytest.raises(ValidationError):
            kappa_quantile(bad)


def test_scheme_derives_kappa_and_sigma(scheme):
    assert scheme.kappa == pytest.approx(KAPPA_95, rel=1e-14)
    assert scheme.sigma == pytest.approx(0.058 / KAPPA_95, rel=1e-15)
    # sigma is defined by sigma * kappa = omega
    assert scheme.sigma * scheme.kappa == pytest.approx(scheme.omega, rel=1e-15)


def test_scheme_validation():
    with pytest.raises(ValidationError, match="alpha"):
        EvalScheme(alpha=1.2, omega=0.05)
    with pytest.raises(ValidationError, match="omega"):
        EvalScheme(alpha=0.95, omega=0.0)
    with pytest.raises(ValidationError, match="omega"):
        EvalScheme(alpha=0.95, omega=math.inf)


# --- the kernel ------------------------------------------------------------------


def test_kernel_unbiased_zero_variance_equals_alpha(scheme):
    assert coverage_kernel(0.0, 0.0, scheme) == pytest.approx(0.95, abs=1e-14)


def test_kernel_is_even_in_bias(scheme):
    for b in (0.001, 0.03, 0.058, 0.2):
        assert coverage_kernel(b, 0.0, scheme) == pytest.approx(
            coverage_kernel(-b, 0.0, scheme), rel=1e-14)
        assert coverage_kernel(b, 1e-3, scheme) == pytest.approx(
            coverage_kernel(-b, 1e-3, scheme), rel=1e-14)


def test_kernel_monotone_in_bias_and_variance(scheme):
    biases = np.linspace(0.0, 0.3, 40)
    values = coverage_kernel(biases, 0.0, scheme)
    assert np.all(np.diff(values) < 0.0)
    variances = np.linspace(0.0, 0.01, 40)
    values = coverage_kernel(0.0, variances, scheme)
    assert np.all(np.diff(values) < 0.0)


def test_kernel_broadcasts_and_returns_scalar_for_scalars(scheme):
    assert isinstance(coverage_kernel(0.01, 0.0, scheme), float)
    grid = coverage_kernel(np.linspace(0, 0.1, 7), 0.0, scheme)
    assert grid.shape == (7,)
    matrix = coverage_kernel(np.linspace(0, 0.1, 7)[:, None],
                             np.linspace(0, 1e-3, 5)[None, :], scheme)
    assert matrix.shape == (7, 5)


def test_kernel_against_direct_formula(scheme):
    rng = np.random.default_rng(42)
    for _ in range(30):
        b = float(rng.normal(0.0, 0.05))
        v = float(rng.uniform(0.0, 0.005))
        nu = math.sqrt(scheme.sigma ** 2 + v)
        direct = (gaussian.cdf((b + scheme.omega) / nu)
                  - gaussian.cdf((b - scheme.omega) / nu))
        assert coverage_kernel(b, v, scheme) == pytest.approx(direct, rel=1e-14)


def test_kernel_validation(scheme):
    with pytest.raises(ValidationError, match="bias"):
        coverage_kernel(math.nan, 0.0, scheme)
    with pytest.raises(ValidationError, match="variance"):
        coverage_kernel(0.0, -1e-6, scheme)


# --- the two closed-form coverages ------------------------------------------------


def test_constant_coverage_peaks_at_alpha(scheme):
    assert coverage_of_constant(100.0, 100.0, scheme) == pytest.approx(
        0.95, abs=1e-14)
    for b in (1e-4, 1e-3, 0.01, 0.1):
        assert coverage_of_constant(100.0 + b, 100.0, scheme) < 0.95


def test_constant_coverage_at_bias_equal_to_half_width(scheme):
    # bias exactly omega: Phi(2 kappa) - Phi(0), just a hair under one half
    value = coverage_of_constant(100.0 + scheme.omega, 100.0, scheme)
    assert value == pytest.approx(0.49995571228083935, rel=1e-12)


def test_unbiased_coverage_frozen_values():
    v = 0.029 ** 2
    wide = EvalScheme(alpha=0.95, omega=0.058)
    narrow = EvalScheme(alpha=0.95, omega=0.02)
    assert coverage_of_unbiased(0.0, wide) == pytest.approx(0.95, abs=1e-14)
    assert coverage_of_unbiased(v, wide) == pytest.approx(
        0.8384399744583299, rel=1e-12)
    assert coverage_of_unbiased(v, narrow) == pytest.approx(
        0.48466705121452236, rel=1e-12)


# --- plug-in coverage estimator ----------------------------------------------------


def test_estimate_coverage_zero_bias_has_exactly_zero_variance(scheme):
    est = estimate_coverage(100.0, 100.0, 0.029 ** 2, scheme)
    assert est.value == pytest.approx(0.95, abs=1e-14)
    assert est.variance == 0.0
    assert est.ci_low == est.value == est.ci_high
    assert not est.ci_clipped


def test_estimate_coverage_never_exceeds_alpha(scheme):
    for bias in np.linspace(-0.2, 0.2, 41):
        est = estimate_coverage(100.0 + bias, 100.0, 1e-4, scheme)
        assert est.value <= 0.95 + 1e-14


def test_estimate_coverage_variance_matches_numerical_derivative(scheme):
    v = 0.0007
    theta_audit = 100.0
    for bias in (0.004, 0.02, 0.06, 0.09):
        est = estimate_coverage(theta_audit + bias, theta_audit, v, scheme)
        h = 1e-6
        up = coverage_of_constant(theta_audit + bias, theta_audit - h, scheme)
        down = coverage_of_constant(theta_audit + bias, theta_audit + h, scheme)
        slope = (up - down) / (2.0 * h)
        assert est.variance == pytest.approx(v * slope ** 2, rel=1e-5)


def test_estimate_coverage_is_even_in_the_bias(scheme):
    a = estimate_coverage(100.02, 100.0, 1e-4, scheme)
    b = estimate_coverage(99.98, 100.0, 1e-4, scheme)
    assert a.value == pytest.approx(b.value, rel=1e-14)
    assert a.variance == pytest.approx(b.variance, rel=1e-13)


def test_estimate_coverage_audit_regime(scheme):
    # the committed example regime: bias about 0.0011, audit SD 0.029
    est = estimate_coverage(0.001099, 0.0, 0.029 ** 2, scheme)
    assert 0.948 <= est.value <= 0.950
    assert est.value == pytest.approx(0.9498419940167805, rel=1e-12)


def test_estimate_coverage_validation(scheme):
    with pytest.raises(ValidationError, match="variance"):
        estimate_coverage(1.0, 1.0, -1e-9, scheme)
    with pytest.raises(ValidationError, match="variance"):
        estimate_coverage(1.0, 1.0, math.nan, scheme)


# --- unbiased-benchmark coverage estimator -------------------------------------------


def test_estimate_unbiased_coverage_point_matches_closed_form(scheme):
    v = 0.029 ** 2
    vov = default_variance_of_variance(v, 1000)
    est = estimate_unbiased_coverage(v, vov, scheme)
    assert est.value == pytest.approx(coverage_of_unbiased(v, scheme), rel=1e-14)
    assert est.inputs["var_of_variance"] == pytest.approx(vov)


def test_estimate_unbiased_coverage_variance_matches_numerical_derivative(scheme):
    v = 0.0006
    vov = 1e-8
    est = estimate_unbiased_coverage(v, vov, scheme)
    h = 1e-9
    slope = (coverage_of_unbiased(v + h, scheme)
             - coverage_of_unbiased(v - h, scheme)) / (2.0 * h)
    assert est.variance == pytest.approx(vov * slope ** 2, rel=1e-4)


def test_estimate_unbiased_coverage_ci_clips(scheme):
    v = 0.029 ** 2
    est = estimate_unbiased_coverage(v, 1.0, scheme)  # absurdly noisy v-hat
    assert est.ci_clipped
    assert est.ci_low == 0.0
    assert est.ci_high == 1.0


def test_estimate_unbiased_coverage_validation(scheme):
    with pytest.raises(ValidationError):
        estimate_unbiased_coverage(-1e-9, 1e-9, scheme)
    with pytest.raises(ValidationError):
        estimate_unbiased_coverage(1e-4, -1e-9, scheme)


def test_default_variance_of_variance():
    assert default_variance_of_variance(0.001, 101) == pytest.approx(2e-8, rel=1e-13)
    with pytest.raises(ValidationError, match="households"):
        default_variance_of_variance(0.001, 1)
    with pytest.raises(ValidationError):
        default_variance_of_variance(-0.001, 100)


def test_coverage_estimate_validation():
    with pytest.raises(ValidationError, match=r"out of \[0, 1\]"):
        CoverageEstimate(value=1.2, variance=0.0, ci_low=1.2, ci_high=1.2)
    with pytest.raises(ValidationError, match="variance"):
        CoverageEstimate(value=0.5, variance=-1.0, ci_low=0.4, ci_high=0.6)
    with pytest.raises(ValidationError, match="bracket"):
        CoverageEstimate(value=0.5, variance=0.0, ci_low=0.6, ci_high=0.7)


# --- MSE -------------------------------------------------------------------------------


def test_mse_estimate_arithmetic():
    est = mse_estimate(100.05, 100.0, 0.0004)
    assert est.value == pytest.approx(0.05 ** 2 - 0.0004, rel=1e-12)
    assert not est.is_negative
    small = mse_estimate(100.001, 100.0, 0.0004)
    assert small.value == pytest.approx(1e-6 - 4e-4, rel=1e-9)
    assert small.is_negative
    with pytest.raises(ValidationError):
        mse_estimate(1.0, 1.0, -1.0)


# --- break-even variance -----------------------------------------------------------------


def test_break_even_solves_the_parity_equation(scheme):
    for bias in (0.005, 0.015, 0.029, 0.05, 0.09):
        result = break_even_variance(100.0 + bias, 100.0, scheme)
        assert not result.at_boundary
        lhs = coverage_of_unbiased(result.variance, scheme)
        rhs = coverage_of_constant(100.0 + bias, 100.0, scheme)
        assert abs(lhs - rhs) < 1e-10


def test_break_even_frozen_value(scheme):
    # a constant biased by one audit SE (half the half-width) ties with an
    # unbiased competitor roughly as noisy as the audit itself
    result = break_even_variance(0.029, 0.0, scheme)
    assert result.variance == pytest.approx(8.708510357161621e-04, rel=1e-9)
    assert math.sqrt(result.variance) / 0.029 == pytest.approx(1.0175926,
                                                               abs=1e-6)


def test_break_even_boundary_when_constant_is_exact(scheme):
    result = break_even_variance(100.0, 100.0, scheme)
    assert result == BreakEvenResult(variance=0.0, at_boundary=True)


def test_break_even_grows_with_bias(scheme):
    # the worse the constant, the more variance its unbiased rival may carry
    biases = np.linspace(0.002, 0.1, 25)
    variances = [break_even_variance(100.0 + b, 100.0, scheme).variance
                 for b in biases]
    assert np.all(np.diff(variances) > 0.0)
