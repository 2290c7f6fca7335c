import math

import mpmath as mp
import numpy as np
import pytest

from driftbound.numerics import (
    DEFAULT_QUADRATURE,
    NumericsError,
    QuadratureError,
    QuadratureSpec,
    RngStream,
    batched_infimum,
    draw_gamma,
    draw_inverse_gamma,
    draw_normal,
    erf,
    golden_section_batch,
    integrate,
    integrate_halfline,
    integrate_with_error,
    minimize_scalar,
)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def test_polynomial_integral_exact():
    assert integrate(lambda x: x**2, 0.0, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_standard_normal_mass():
    val = integrate(lambda x: np.exp(-0.5 * x**2) / math.sqrt(2 * math.pi), -8.0, 8.0)
    assert val == pytest.approx(1.0, abs=1e-9)


def _inv_gamma_pdf(shape, scale):
    const = scale**shape / math.gamma(shape)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return const * x ** (-shape - 1.0) * np.exp(-scale / x)

    return pdf


def test_inverse_gamma_normalization_halfline():
    # closed-form normalizing constant: the density integrates to one
    assert integrate_halfline(_inv_gamma_pdf(5.0, 4.0)) == pytest.approx(1.0, abs=1e-8)


def test_halfline_exponential_and_gamma_mean():
    assert integrate_halfline(lambda x: np.exp(-x)) == pytest.approx(1.0, abs=1e-9)
    assert integrate_halfline(lambda x: x * np.exp(-x)) == pytest.approx(1.0, abs=1e-9)
    # inverse-gamma(3, 2) mean = scale/(shape-1) = 1
    pdf = _inv_gamma_pdf(3.0, 2.0)
    assert integrate_halfline(lambda x: np.asarray(x) * pdf(x)) == pytest.approx(1.0, abs=1e-8)


# twenty closed-form integrals used to check that reported error estimates
# are conservative (true error <= estimate, estimate <= tolerance target)
_CLOSED_FORMS = [
    (lambda x: x**2, 0.0, 1.0, 1.0 / 3.0),
    (lambda x: x**7, 0.0, 1.0, 1.0 / 8.0),
    (lambda x: np.exp(x), 0.0, 1.0, math.e - 1.0),
    (lambda x: np.sin(x), 0.0, math.pi, 2.0),
    (lambda x: np.cos(3.0 * x), 0.0, 1.0, math.sin(3.0) / 3.0),
    (lambda x: 1.0 / (1.0 + x**2), -1.0, 1.0, math.pi / 2.0),
    (lambda x: np.sqrt(x), 0.0, 4.0, 16.0 / 3.0),
    (lambda x: np.log(x), 1.0, math.e, 1.0),
    (lambda x: x * np.exp(-(x**2)), 0.0, 3.0, 0.5 * (1.0 - math.exp(-9.0))),
    (lambda x: np.cosh(x), -1.0, 1.0, 2.0 * math.sinh(1.0)),
    (lambda x: 1.0 / x, 1.0, 10.0, math.log(10.0)),
    (lambda x: np.sin(10.0 * x), 0.0, 2.0, (1.0 - math.cos(20.0)) / 10.0),
    (lambda x: np.exp(-x) * np.sin(x), 0.0, 10.0,
     0.5 * (1.0 - math.exp(-10.0) * (math.sin(10.0) + math.cos(10.0)))),
    (lambda x: x**3 - 2.0 * x, -2.0, 3.0, 65.0 / 4.0 - 5.0),
    (lambda x: np.abs(x), -1.0, 2.0, 2.5),
    (lambda x: 1.0 / np.sqrt(1.0 + x), 0.0, 3.0, 2.0),
    (lambda x: np.exp(-5.0 * x), 0.0, 10.0, (1.0 - math.exp(-50.0)) / 5.0),
    (lambda x: x / (1.0 + x**4), 0.0, 1.0, math.atan(1.0) / 2.0),
    (lambda x: np.exp(-50.0 * (x - 0.3) ** 2), 0.0, 1.0,
     math.sqrt(math.pi / 50.0) / 2.0 * (math.erf(math.sqrt(50.0) * 0.7)
                                        + math.erf(math.sqrt(50.0) * 0.3))),
    (lambda x: np.tanh(x), 0.0, 2.0, math.log(math.cosh(2.0))),
]


@pytest.mark.parametrize("f,a,b,exact", _CLOSED_FORMS)
def test_error_estimates_are_conservative(f, a, b, exact):
    val, err = integrate_with_error(f, a, b)
    assert abs(val - exact) <= err
    assert err <= max(DEFAULT_QUADRATURE.absolute_tolerance,
                      DEFAULT_QUADRATURE.relative_tolerance * abs(val))


def test_nonconvergence_carries_best_estimate():
    spec = QuadratureSpec(absolute_tolerance=1e-300, relative_tolerance=1e-16,
                          max_subdivisions=4)
    with pytest.raises(QuadratureError) as err:
        integrate(lambda x: np.sin(37.0 * x) ** 2, 0.0, 3.0, spec)
    assert math.isfinite(err.value.best_estimate)
    assert err.value.error_estimate > 0.0


def test_integrate_rejects_bad_interval():
    with pytest.raises(NumericsError):
        integrate(lambda x: x, 1.0, 1.0)
    with pytest.raises(NumericsError):
        integrate(lambda x: x, 0.0, math.inf)


def test_integrate_reports_nonfinite_abscissa():
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0.5, np.nan, 1.0)

    with pytest.raises(NumericsError, match="non-finite"):
        integrate(f, 0.0, 1.0)


def test_scalar_only_integrand_supported():
    assert integrate(lambda x: math.exp(x), 0.0, 1.0) == pytest.approx(math.e - 1.0, abs=1e-9)


def test_quadrature_spec_validation():
    with pytest.raises(NumericsError):
        QuadratureSpec(absolute_tolerance=0.0)
    with pytest.raises(NumericsError):
        QuadratureSpec(relative_tolerance=-1.0)
    with pytest.raises(NumericsError):
        QuadratureSpec(max_subdivisions=0)


# ---------------------------------------------------------------------------
# scalar minimization
# ---------------------------------------------------------------------------


def test_minimize_quadratic():
    x, fx = minimize_scalar(lambda x: (x - 2.0) ** 2, 0.0, 5.0)
    assert x == pytest.approx(2.0, abs=1e-8)
    assert fx == pytest.approx(0.0, abs=1e-14)


def test_minimize_cosine():
    x, fx = minimize_scalar(lambda x: np.cos(x), 0.0, 2.0 * math.pi)
    assert x == pytest.approx(math.pi, abs=1e-6)
    assert fx == pytest.approx(-1.0, abs=1e-12)


def test_minimize_matches_brute_force_density_family():
    # infimum over the variance parameter of a normal density at a fixed
    # point; the oracle is a dense grid scan (frozen conclusion: for
    # variance A/100 on [0.9, 1.1] at point 0.05 the infimum sits at the
    # A = 1.1 end, where the density is flattest)
    point = 0.05

    def density(a):
        v = np.asarray(a, dtype=float) / 100.0
        return np.exp(-point**2 / (2.0 * v)) / np.sqrt(2.0 * math.pi * v)

    grid = np.linspace(0.9, 1.1, 100_001)
    vals = density(grid)
    brute_x = grid[int(np.argmin(vals))]
    brute_val = float(vals.min())
    assert brute_x == pytest.approx(1.1, abs=1e-9)

    x, fx = minimize_scalar(density, 0.9, 1.1)
    assert x == pytest.approx(brute_x, abs=1e-4)
    assert fx == pytest.approx(brute_val, rel=1e-9)


def test_minimize_reports_nonfinite_abscissa():
    def f(x):
        return float("nan") if x > 1.0 else x

    with pytest.raises(NumericsError, match="x="):
        minimize_scalar(f, 0.0, 2.0)


def test_batched_infimum_matches_scalar_route():
    points = np.array([-0.4, 0.0, 0.3, 1.2])

    def family(a, x):
        return (np.asarray(a) - x) ** 2 + 0.1 * np.asarray(a)

    batched = batched_infimum(family, -2.0, 2.0, points)
    for x_val, got in zip(points, batched):
        _, expect = minimize_scalar(lambda a: (a - x_val) ** 2 + 0.1 * a, -2.0, 2.0)
        assert got == pytest.approx(expect, rel=1e-7, abs=1e-10)


def test_golden_section_batch_quadratics():
    centers = np.array([0.2, 0.5, 0.9])
    x, fx = golden_section_batch(lambda a: (a - centers) ** 2, np.zeros(3), np.ones(3),
                                 tol=1e-12)
    assert np.allclose(x, centers, atol=1e-6)
    assert np.all(fx < 1e-12)


# ---------------------------------------------------------------------------
# erf
# ---------------------------------------------------------------------------


def test_erf_examples():
    assert erf(0.0) == 0.0
    assert erf(-0.7) == -erf(0.7)
    # frozen from a 40-digit reference evaluation
    assert erf(1.0) == pytest.approx(0.84270079294971487, abs=1e-12)


def test_erf_matches_high_precision_reference():
    mp.mp.dps = 30
    for x in np.linspace(-6.0, 6.0, 41):
        assert abs(erf(float(x)) - float(mp.erf(float(x)))) <= 1e-12


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


def test_stream_determinism_and_independence():
    a = draw_normal(RngStream(42, 7), 0.0, 1.0, 1000)
    b = draw_normal(RngStream(42, 7), 0.0, 1.0, 1000)
    c = draw_normal(RngStream(42, 8), 0.0, 1.0, 1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_key_validation():
    with pytest.raises(NumericsError):
        RngStream(-1, 0)
    with pytest.raises(NumericsError):
        RngStream(0, 2**64)


def test_draw_parameter_validation():
    s = RngStream(1, 0)
    with pytest.raises(NumericsError):
        draw_normal(s, 0.0, 0.0)
    with pytest.raises(NumericsError):
        draw_gamma(s, -1.0, 1.0)
    with pytest.raises(NumericsError):
        draw_inverse_gamma(s, 1.0, 0.0)


@pytest.mark.parametrize("mean,var", [
    (0.0, 1.0), (1.0, 1.0), (-2.0, 0.25), (0.0, 9.0), (5.0, 4.0),
    (0.3, 0.01), (-0.7, 2.5), (10.0, 0.5), (0.0, 100.0), (1e3, 1.0),
])
def test_normal_moments(mean, var):
    x = draw_normal(RngStream(3, hash((mean, var)) % 2**63), mean, var, 1_000_000)
    se_mean = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - mean) <= 4.0 * se_mean
    m2 = x**2
    assert abs(m2.mean() - (var + mean**2)) <= 4.0 * m2.std() / math.sqrt(x.size)


@pytest.mark.parametrize("shape,rate", [
    (0.5, 1.0), (1.0, 1.0), (2.0, 0.5), (3.0, 2.0), (5.0, 4.0),
    (10.0, 1.0), (0.7, 3.0), (52.5, 1.0), (4.0, 10.0), (1.5, 0.2),
])
def test_gamma_moments(shape, rate):
    x = draw_gamma(RngStream(5, hash((shape, rate)) % 2**63), shape, rate, 1_000_000)
    se_mean = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - shape / rate) <= 4.0 * se_mean
    m2 = x**2
    exact_m2 = shape * (shape + 1.0) / rate**2
    assert abs(m2.mean() - exact_m2) <= 4.0 * m2.std() / math.sqrt(x.size)


@pytest.mark.parametrize("shape,scale", [
    (3.0, 1.0), (4.0, 2.0), (5.0, 4.0), (6.0, 1.0), (8.0, 3.0),
    (10.0, 10.0), (4.5, 0.5), (7.0, 2.5), (12.0, 6.0), (20.0, 5.0),
])
def test_inverse_gamma_moments(shape, scale):
    x = draw_inverse_gamma(RngStream(7, hash((shape, scale)) % 2**63), shape, scale,
                           1_000_000)
    se_mean = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - scale / (shape - 1.0)) <= 4.0 * se_mean
    m2 = x**2
    exact_m2 = scale**2 / ((shape - 1.0) * (shape - 2.0))
    assert abs(m2.mean() - exact_m2) <= 4.0 * m2.std() / math.sqrt(x.size)


def test_inverse_gamma_frozen_examples():
    # mean = scale/(shape-1) = 1 and second moment = 16/12 = 4/3 for (5, 4)
    x = draw_inverse_gamma(RngStream(11, 0), 5.0, 4.0, 1_000_000)
    assert abs(x.mean() - 1.0) <= 3.0 * x.std() / math.sqrt(x.size)
    m2 = x**2
    assert abs(m2.mean() - 4.0 / 3.0) <= 3.0 * m2.std() / math.sqrt(x.size)
    z = draw_normal(RngStream(11, 1), 0.0, 1.0, 1_000_000)
    assert abs(z.var() - 1.0) <= 3.0 * math.sqrt(2.0 / z.size)
