import math

import mpmath
import numpy as np
import pytest

from funq import specfun


def series_j(nu, x, terms=200):
    """Ascending power series in extended precision (independent oracle)."""
    mpmath.mp.dps = 40
    x, nu = mpmath.mpf(x), mpmath.mpf(nu)
    s = mpmath.mpf(0)
    for k in range(terms):
        s += (-1) ** k * (x / 2) ** (2 * k + nu) / (mpmath.factorial(k) * mpmath.gamma(k + nu + 1))
    return float(s)


def bisect_zero(nu, lo, hi):
    f = lambda x: series_j(nu, x, 80)
    flo = f(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_half_integer_values():
    assert abs(specfun.bessel_j(-0.5, math.pi / 4) - 2 / math.pi) < 1e-12
    assert abs(specfun.bessel_j(0.5, math.pi)) < 1e-12


def test_half_integer_closed_forms_random():
    x = np.random.default_rng(3).uniform(1e-3, 100, 1000)
    base = np.sqrt(2 / (np.pi * x))
    assert np.max(np.abs(specfun.bessel_j(0.5, x) - base * np.sin(x))) < 1e-12
    assert np.max(np.abs(specfun.bessel_j(-0.5, x) - base * np.cos(x))) < 1e-12


@pytest.mark.parametrize("nu", [-0.7, -0.3, 0.0, 0.3, 0.7, 1.5])
@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 11.9, 15.0, 30.0])
def test_against_power_series(nu, x):
    assert abs(specfun.bessel_j(nu, x) - series_j(nu, x)) < 1e-12


def test_first_zero_j0():
    oracle = bisect_zero(0.0, 2.0, 3.0)
    z = specfun.bessel_zeros(0.0, 1).zeros[0]
    assert abs(z - oracle) < 1e-8
    assert abs(z - 2.404826) < 1e-5
    assert abs(specfun.bessel_j(0.0, 2.404826)) < 1e-5


@pytest.mark.parametrize("nu", [-0.6, 0.4, 1.2])
def test_zeros_against_bisection(nu):
    zeros = specfun.bessel_zeros(nu, 3).zeros
    for z in zeros:
        assert abs(z - bisect_zero(nu, z - 0.3, z + 0.3)) < 1e-9


def test_half_integer_zeros():
    j = np.arange(1, 201)
    np.testing.assert_allclose(specfun.bessel_zeros(-0.5, 200).zeros, (j - 0.5) * np.pi, atol=1e-10, rtol=0)
    np.testing.assert_allclose(specfun.bessel_zeros(0.5, 200).zeros, j * np.pi, atol=1e-10, rtol=0)


@pytest.mark.parametrize("rho", [0.1, 0.3, 0.5, 0.7, 0.95])
def test_zero_table_invariants(rho):
    for nu in (-rho, 1 - rho):
        t = specfun.bessel_zeros(nu, 600)
        z = t.zeros
        assert np.all(np.diff(z) > 0)
        assert np.all(t.residuals() < 1e-10)
        gaps = np.diff(z)[9:]
        assert np.all((gaps > np.pi - 1) & (gaps < np.pi + 1))
        j = np.arange(50, 601)
        assert np.all(np.abs(z[49:] - np.pi * j) < np.pi)


def test_zero_cache_growth_consistent():
    a = specfun.bessel_zeros(0.37, 5).zeros.copy()
    b = specfun.bessel_zeros(0.37, 50).zeros
    np.testing.assert_array_equal(a, b[:5])
    with pytest.raises(ValueError):
        b[0] = 0.0


def test_order_and_argument_guards():
    with pytest.raises(ValueError):
        specfun.bessel_j(2.5, 1.0)
    with pytest.raises(ValueError):
        specfun.bessel_j(-1.0, 1.0)
    with pytest.raises(ValueError):
        specfun.bessel_j(0.5, 0.0)
    with pytest.raises(ValueError):
        specfun.bessel_zeros(0.5, 0)


def test_gamma_and_c_rho():
    assert specfun.gamma_fn(5) == pytest.approx(24, rel=1e-14)
    assert abs(specfun.c_rho(0.5) - 1 / math.sqrt(math.pi)) < 1e-12
    mpmath.mp.dps = 50
    rho = mpmath.mpf("0.7")
    oracle = float(mpmath.sqrt(mpmath.gamma(1 + 2 * rho) * mpmath.sin(mpmath.pi * rho) / mpmath.pi))
    assert abs(specfun.c_rho(0.7) - oracle) < 1e-10
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            specfun.c_rho(bad)
    with pytest.raises(ValueError):
        specfun.gamma_fn(0.0)
