import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funq import allocation as al


def test_nu_theoretical_cases():
    np.testing.assert_allclose(al.nu_theoretical(1.3, 0.0, 6), np.arange(1, 7) ** -1.3, rtol=1e-15)
    nu = al.nu_theoretical(1.0, 2.0, 10)
    flat = math.log(8) ** 2 / 7
    np.testing.assert_allclose(nu[:7], flat, rtol=1e-14)
    assert abs(nu[7] - math.log(9) ** 2 / 8) < 1e-14


def test_nu_theoretical_monotone_grid():
    for theta in np.linspace(0.55, 3.0, 10):
        for gamma in np.linspace(0.0, 4.0, 10):
            nu = al.nu_theoretical(theta, gamma, 500)
            assert np.all(np.diff(nu) <= 1e-15 * nu[:-1]), (theta, gamma)
            assert np.all(nu > 0)


def test_continuous_examples():
    np.testing.assert_allclose(al.continuous_allocation([1, 0.5], 2, 16), [4 * math.sqrt(2), 2 * math.sqrt(2)], rtol=1e-14)
    assert al.continuous_allocation([1, 0.3, 0.1], 1, 37)[0] == pytest.approx(37, rel=1e-14)
    np.testing.assert_allclose(al.continuous_allocation(np.ones(5), 5, 243), 3.0, rtol=1e-14)


def test_continuous_no_overflow_large_m():
    nu = al.nu_theoretical(1.5, 0.0, 3000)
    z = al.continuous_allocation(nu, 3000, 1e6)
    assert np.all(np.isfinite(z))
    assert abs(np.sum(np.log(z)) - math.log(1e6)) < 1e-9 * 3000


def test_integer_examples():
    a = al.integer_allocation([1, 0.5], 2, 16)
    assert a.levels == (5, 2) and a.product == 10
    assert al.integer_allocation([1.0], 1, 7).levels == (7,)
    b = al.integer_allocation([1, 0.5, 0.25], 3, 8)
    assert b.continuous[2] == pytest.approx(1.0, rel=1e-12)
    assert b.levels[2] == 1 and b.product <= 8


def test_infeasible_block_length():
    with pytest.raises(al.InfeasibleBlockLength) as info:
        al.integer_allocation([1, 0.5, 0.25, 0.125], 4, 8)
    assert info.value.z_m < 1


def test_max_feasible_m_cases():
    nu = 1.0 / np.arange(1, 50)
    assert al.max_feasible_m(nu, 1)[0] == 1
    m, capped = al.max_feasible_m(np.ones(20), 2, cap=20)
    assert (m, capped) == (20, True)
    for theta in (1.0, 1.5):
        nu = al.nu_theoretical(theta, 0.0, 200)
        m, _ = al.max_feasible_m(nu, math.exp(20))
        assert 0.8 <= m * theta / 20 <= 1.2


def z_last(nu, m, N):
    return al.continuous_allocation(nu, m, N)[-1]


@pytest.mark.parametrize("theta, gamma", [(0.75, 0.0), (1.0, 1.0), (2.0, 0.0)])
def test_max_feasible_m_against_direct_scan(theta, gamma):
    nu = al.nu_theoretical(theta, gamma, 300)
    for N in (2, 3, 10, 100, 1000, 10**5, 10**8):
        m, _ = al.max_feasible_m(nu, N)
        assert z_last(nu, m, N) >= 1 - 1e-9
        if m < len(nu):
            assert z_last(nu, m + 1, N) < 1
        # The feasible set is an initial segment.
        assert all(z_last(nu, k, N) >= 1 - 1e-9 for k in range(1, m + 1))


def test_m_star_nondecreasing():
    nu = al.nu_theoretical(1.2, 1.0, 300)
    ms = [al.max_feasible_m(nu, N)[0] for N in range(1, 3000)]
    assert all(b >= a for a, b in zip(ms, ms[1:]))


def test_block_length_rule():
    nu = al.nu_theoretical(1.0, 0.0, 100)
    assert al.choose_block_length(2, nu) == 1
    assert al.choose_block_length(1, nu) == 1
    cap3 = math.floor(2 * math.log(3) / math.log(math.log(3)))
    assert cap3 == 23
    assert al.choose_block_length(3, nu) == min(al.max_feasible_m(nu, 3)[0], cap3)
    N = 16  # just above e^e, where ln ln N is slightly above 1
    assert al.block_length_cap(N) == math.floor(2 * math.log(N) / math.log(math.log(N)))
    assert al.block_length_cap(math.e**math.e) == 5
    assert al.choose_block_length(N, nu) == min(al.max_feasible_m(nu, N)[0], al.block_length_cap(N))


@pytest.mark.parametrize("theta", [0.75, 1.0, 1.5])
@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_feasibility_exhaustive(theta, gamma):
    nu = al.nu_theoretical(theta, gamma, 400)
    for N in range(2, 10**4 + 1):
        a = al.allocate(nu, N)
        assert a.product <= N
        assert min(a.levels) >= 1
        assert list(a.levels) == sorted(a.levels, reverse=True)
        assert a.block_length <= max(al.block_length_cap(N), 1)


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(positive, min_size=1, max_size=12), st.integers(min_value=1, max_value=10**9))
def test_continuous_optimality(raw, N):
    nu = np.sort(np.asarray(raw))[::-1]
    m = len(nu)
    z = al.continuous_allocation(nu, m, N)
    assert abs(np.sum(np.log(z)) - math.log(N)) < 1e-9 * max(1.0, math.log(N))
    best = np.sum(nu / z)
    expected = m * N ** (-1 / m) * math.exp(np.mean(np.log(nu)))
    assert best == pytest.approx(expected, rel=1e-9)
    rng = np.random.default_rng(len(raw) * 7919 + N % 1000)
    for _ in range(5):
        y = np.exp(rng.normal(size=m))
        y *= N ** (1 / m) / math.exp(np.mean(np.log(y)))
        assert best <= np.sum(nu / y) * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(st.lists(positive, min_size=1, max_size=10), st.integers(min_value=1, max_value=10**7))
def test_integer_loss_bound(raw, N):
    nu = np.sort(np.asarray(raw))[::-1]
    m, _ = al.max_feasible_m(nu, N)
    a = al.integer_allocation(nu, m, N)
    z = a.continuous
    assert a.product <= N
    assert all(lv == math.floor(zj * (1 + 1e-9)) or lv == math.floor(zj) for lv, zj in zip(a.levels, z))
    assert np.sum(nu[:m] / np.array(a.levels)) <= 2 * np.sum(nu[:m] / z) * (1 + 1e-9)


def test_random_feasible_y_count():
    # 10^3 random feasible y for a fixed instance.
    nu = al.nu_theoretical(1.0, 0.0, 6)
    N = 5000
    z = al.continuous_allocation(nu, 6, N)
    rng = np.random.default_rng(0)
    y = np.exp(rng.normal(size=(1000, 6)))
    y *= (N ** (1 / 6) / np.exp(np.mean(np.log(y), axis=1)))[:, None]
    assert np.all(np.sum(nu / z) <= np.sum(nu / y, axis=1) * (1 + 1e-12))


@pytest.mark.parametrize("bad", [[], [1.0, -1.0], [np.nan], [0.0]])
def test_bad_weights(bad):
    with pytest.raises(ValueError):
        al.continuous_allocation(bad, 1, 10)
