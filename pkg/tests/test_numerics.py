import math

import mpmath
import numpy as np
import pytest
import scipy.integrate

from msvol.numerics import NumericalError, expm, quad, solve, spectral_abscissa, van_loan_integral


def _mp_expm(a, t=1.0):
    return np.array(mpmath.expm(mpmath.matrix(a.tolist()) * t).tolist(), dtype=float)


def test_expm_diagonal_and_nilpotent():
    d = np.diag([-1.0, 0.5, 2.0])
    assert np.allclose(expm(d), np.diag(np.exp([-1.0, 0.5, 2.0])), rtol=1e-14)
    n = np.array([[0.0, 3.0], [0.0, 0.0]])
    assert np.allclose(expm(n), [[1.0, 3.0], [0.0, 1.0]], rtol=1e-15, atol=1e-15)


def test_expm_matches_arbitrary_precision(rng):
    mpmath.mp.dps = 30
    for _ in range(5):
        a = rng.normal(size=(4, 4)) * 2
        assert np.allclose(expm(a), _mp_expm(a), rtol=1e-12, atol=1e-12)


def test_expm_overflow_is_reported():
    with pytest.raises(NumericalError):
        expm(np.array([[1e4]]))
    with pytest.raises(NumericalError):
        expm(np.array([[np.nan]]))


def test_van_loan_matches_quadrature(rng):
    a = rng.normal(size=(3, 3)) - 2 * np.eye(3)
    b = rng.normal(size=(3, 2))
    c = rng.normal(size=(2, 2))
    t = 1.7
    ref, _ = scipy.integrate.quad_vec(lambda s: _mp_expm(a, t - s) @ b @ _mp_expm(c, s), 0.0, t, epsabs=1e-13)
    assert np.allclose(van_loan_integral(a, b, c, t), ref, rtol=1e-9, atol=1e-11)


def test_van_loan_scalar_closed_form():
    # int_0^t e^{a(t-s)} e^{c s} ds = (e^{ct} - e^{at}) / (c - a)
    a, c, t = -0.4, 0.3, 2.5
    got = van_loan_integral([[a]], [[1.0]], [[c]], t)[0, 0]
    assert got == pytest.approx((math.exp(c * t) - math.exp(a * t)) / (c - a), rel=1e-13)
    assert np.array_equal(van_loan_integral([[a]], [[1.0]], [[c]], 0.0), [[0.0]])


def test_van_loan_rejects_bad_input():
    with pytest.raises(ValueError):
        van_loan_integral(np.eye(2), np.ones((3, 2)), np.eye(2), 1.0)
    with pytest.raises(ValueError):
        van_loan_integral(np.eye(2), np.eye(2), np.eye(2), -1.0)


def test_spectral_abscissa():
    assert spectral_abscissa([[-1.0, 5.0], [0.0, -3.0]]) == pytest.approx(-1.0)
    # rotation generator: eigenvalues +-i
    assert spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)
    q = np.array([[-0.3, 0.3], [0.2, -0.2]])
    assert abs(spectral_abscissa(q.T)) < 1e-12
    with pytest.raises(ValueError):
        spectral_abscissa(np.ones((2, 3)))


def test_solve():
    assert np.allclose(solve([[2.0, 0.0], [0.0, 4.0]], [1.0, 1.0]), [0.5, 0.25])
    with pytest.raises(NumericalError):
        solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 0.0])


def test_quad():
    assert quad(lambda x: x * x, 0.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert quad(lambda x: math.exp(-x), 0.0, math.inf) == pytest.approx(1.0, rel=1e-10)
