"""Small dense matrix kernels shared by the moment formulas.

Everything here works on plain ``numpy`` arrays of shape ``(n, n)`` with
``n`` at most a few dozen.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import scipy.integrate
import scipy.linalg

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8


class NumericalError(ArithmeticError):
    """Raised when a matrix kernel produces non-finite output."""


def _square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    return a


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    a = _square(a)
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(a)
        except FloatingPointError as exc:
            raise NumericalError(f"expm overflow (norm {np.abs(a).sum(axis=0).max():.3g})") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"expm overflow (norm {np.abs(a).sum(axis=0).max():.3g})")
    return out


def van_loan_integral(a, b, c, t: float) -> np.ndarray:
    """Return ``int_0^t expm(a (t - s)) @ b @ expm(c s) ds``.

    The integral is the upper-right block of ``expm([[a, b], [0, c]] t)``.
    ``b`` may be rectangular (``a`` is n x n, ``c`` is m x m, ``b`` is n x m).
    """
    a = _square(a)
    c = _square(c)
    b = np.asarray(b, dtype=float)
    n, m = a.shape[0], c.shape[0]
    if b.shape != (n, m):
        raise ValueError(f"b has shape {b.shape}, expected {(n, m)}")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.zeros((n, m))
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    block[n:, n:] = c
    return expm(block * t)[:n, n:]


def spectral_abscissa(a) -> float:
    """Largest real part among the eigenvalues of ``a``."""
    a = _square(a)
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigenvalue iteration did not converge") from exc
    return float(np.max(eig.real))


def solve(a, b) -> np.ndarray:
    """Solve ``a x = b``; a singular ``a`` raises :class:`NumericalError`."""
    a = _square(a)
    try:
        x = np.linalg.solve(a, np.asarray(b, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular linear system") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values")
    return x


def quad(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Adaptive Gauss-Kronrod quadrature at the package-wide tolerances.

    Returns ``inf`` when the integral diverges instead of raising, so callers
    can report divergence in their own terms.
    """
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        val, _err = scipy.integrate.quad(
            f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200
        )
    if not np.isfinite(val):
        return float("inf")
    return float(val)
