import numpy as np
import pytest
from scipy import special

from spinfid.elliptic import agm, ellipk, jacobi_sn


def test_agm_known_value():
    # Gauss's constant: 1/agm(1, sqrt 2)
    assert np.isclose(1 / agm(1.0, np.sqrt(2.0)), 0.8346268416740731, rtol=1e-15)


@pytest.mark.parametrize("m", [0.0, 1e-8, 0.1, 0.5, 0.9, 0.999, 1 - 1e-10])
def test_ellipk_matches_scipy(m):
    assert np.isclose(ellipk(m), special.ellipk(m), rtol=1e-13)


def test_ellipk_limits():
    assert ellipk(0.0) == pytest.approx(np.pi / 2, abs=1e-15)
    assert np.isinf(ellipk(1.0))


@pytest.mark.parametrize("m", [0.0, 0.3, 0.8, 0.99])
def test_sn_matches_scipy(m):
    u = np.linspace(-7, 13, 301)
    assert np.allclose(jacobi_sn(u, m), special.ellipj(u, m)[0], atol=1e-13)


def test_sn_trigonometric_and_hyperbolic_limits():
    u = np.linspace(-3, 3, 41)
    assert np.allclose(jacobi_sn(u, 0.0), np.sin(u), atol=1e-15)
    assert np.allclose(jacobi_sn(u, 1.0), np.tanh(u), atol=1e-14)


def test_sn_quarter_period():
    for m in (0.2, 0.7):
        assert jacobi_sn(ellipk(m), m) == pytest.approx(1.0, abs=1e-13)
