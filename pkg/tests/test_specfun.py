import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

import oracles
from slmg.errors import DomainError
from slmg.specfun import EULER_GAMMA, bessel_j0, bessel_j1, bessel_y0, bessel_y1, hankel0, hankel1

SAMPLES = [0.05, 0.4, 1.0, 2.1, 3.7, 7.9, 12.5]


def test_j0_at_zero():
    assert bessel_j0(0.0) == 1.0


def test_first_zero_of_j0():
    root = brentq(oracles.j0, 2.0, 3.0, xtol=1e-14)
    assert abs(bessel_j0(root)) < 1e-9
    assert root == pytest.approx(2.404825557695773, abs=1e-12)


@pytest.mark.parametrize("x", SAMPLES)
def test_against_series_oracle(x):
    assert bessel_j0(x) == pytest.approx(oracles.j0(x), abs=1e-14)
    assert bessel_j1(x) == pytest.approx(oracles.j1(x), abs=1e-14)
    assert bessel_y0(x) == pytest.approx(oracles.y0(x), rel=1e-12, abs=1e-14)
    assert bessel_y1(x) == pytest.approx(oracles.y1(x), rel=1e-12, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 40.0))
def test_wronskian(x):
    w = bessel_j1(x) * bessel_y0(x) - bessel_j0(x) * bessel_y1(x)
    assert w == pytest.approx(2 / (np.pi * x), rel=1e-10)


def test_hankel0_small_argument():
    # H0(z) - [1 + (2i/pi)(ln(z/2) + gamma)] = O(z^2 ln z)
    for z in (1e-2, 1e-3, 1e-4):
        lead = 1 + (2j / np.pi) * (np.log(z / 2) + EULER_GAMMA)
        assert abs(hankel0(z) - lead) < 2 * z * z * abs(np.log(z))


def test_hankel1_is_minus_derivative_of_hankel0():
    z, dz = 2.1, 1e-6
    fd = (hankel0(z + dz) - hankel0(z - dz)) / (2 * dz)
    assert abs(fd + hankel1(z)) < 1e-8


def test_vectorised():
    x = np.array(SAMPLES)
    np.testing.assert_allclose(hankel0(x).real, bessel_j0(x))
    assert hankel1(x).shape == x.shape


@pytest.mark.parametrize("f", [bessel_y0, bessel_y1, hankel0, hankel1])
def test_domain_errors_at_zero(f):
    with pytest.raises(DomainError):
        f(0.0)


def test_negative_j_argument():
    with pytest.raises(DomainError):
        bessel_j0(-1.0)
