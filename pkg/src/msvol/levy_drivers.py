"""Compound-Poisson Levy drivers and their Levy-measure functionals.

A driver is ``L_t = drift * t + brownian_sd * W_t + sum of jumps`` where the
jumps arrive at rate ``cp_intensity`` with i.i.d. sizes drawn from a
:class:`JumpLaw`.  The Levy measure is therefore ``cp_intensity * law``.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.special
import scipy.stats

from .numerics import quad

# kernel codes, see _kernels.draw_law
POINT, EXPONENTIAL, NORMAL = 1, 2, 3


class DivergentIntegralError(ArithmeticError):
    """A Levy-measure integral requested by the caller is infinite."""


@dataclass(frozen=True)
class JumpLaw:
    """Distribution of a single jump.

    ``kind`` is one of ``"point"`` (mass at ``a``), ``"exponential"``
    (``a`` is the RATE, mean ``1/a``) or ``"normal"`` (mean ``a``, sd ``b``).
    """

    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "exponential", "normal"):
            raise ValueError(f"unknown jump law {self.kind!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("jump law parameters must be finite")
        if self.kind == "exponential" and self.a <= 0:
            raise ValueError("exponential rate must be > 0")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal sd must be >= 0")

    @classmethod
    def point(cls, value: float) -> JumpLaw:
        return cls("point", float(value))

    @classmethod
    def zero(cls) -> JumpLaw:
        return cls("point", 0.0)

    @classmethod
    def exponential(cls, rate: float) -> JumpLaw:
        return cls("exponential", float(rate))

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> JumpLaw:
        return cls("normal", float(mean), float(sd))

    @property
    def is_zero(self) -> bool:
        return self.kind == "point" and self.a == 0.0

    @property
    def support_min(self) -> float:
        if self.kind == "point":
            return self.a
        if self.kind == "exponential":
            return 0.0
        return -math.inf if self.b > 0 else self.a

    @property
    def code(self) -> tuple[int, float, float]:
        """``(code, p1, p2)`` triple understood by the jitted samplers."""
        return {"point": POINT, "exponential": EXPONENTIAL, "normal": NORMAL}[self.kind], self.a, self.b

    def moment(self, n: int) -> float:
        """Raw moment ``E[Y**n]``."""
        if n < 0:
            raise ValueError("moment order must be >= 0")
        if self.kind == "point":
            return self.a**n if n else 1.0
        if self.kind == "exponential":
            return math.factorial(n) / self.a**n
        # E[Y^n] = mu E[Y^(n-1)] + (n-1) sd^2 E[Y^(n-2)]
        prev, cur = 0.0, 1.0
        for k in range(1, n + 1):
            prev, cur = cur, self.a * cur + (k - 1) * self.b**2 * prev
        return cur

    def mgf(self, w: float) -> float:
        """``E[exp(w Y)]``, ``inf`` where it does not exist."""
        if self.kind == "point":
            return math.exp(w * self.a)
        if self.kind == "exponential":
            return self.a / (self.a - w) if w < self.a else math.inf
        return math.exp(w * self.a + 0.5 * (w * self.b) ** 2)

    def expect(self, f: Callable[[float], float], lo: float = -math.inf, hi: float = math.inf) -> float:
        """``E[f(Y); lo < Y < hi]`` by adaptive quadrature (exact for point masses)."""
        if self.kind == "point":
            return float(f(self.a)) if lo < self.a < hi else 0.0
        if self.kind == "normal" and self.b == 0:
            return float(f(self.a)) if lo < self.a < hi else 0.0
        if self.kind == "exponential":
            lo = max(lo, 0.0)
            dens = lambda y: self.a * math.exp(-self.a * y)  # noqa: E731
        else:
            dens = scipy.stats.norm(self.a, self.b).pdf
        if hi <= lo:
            return 0.0
        if self.kind == "normal" and lo < self.a < hi:
            # split at the mode; QUADPACK can miss a narrow bump on an infinite range
            return quad(lambda y: f(y) * dens(y), lo, self.a) + quad(lambda y: f(y) * dens(y), self.a, hi)
        return quad(lambda y: f(y) * dens(y), lo, hi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "point":
            return np.full(size, self.a)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.a, size)
        return rng.normal(self.a, self.b, size)

    def to_json(self) -> dict:
        if self.kind == "point":
            return {"type": "point", "value": self.a}
        if self.kind == "exponential":
            return {"type": "exponential", "rate": self.a}
        return {"type": "normal", "mean": self.a, "sd": self.b}


@dataclass(frozen=True)
class LevyDriverSpec:
    """Drift + Brownian + compound-Poisson Levy process."""

    drift: float = 0.0
    brownian_sd: float = 0.0
    cp_intensity: float = 0.0
    jump_law: JumpLaw = JumpLaw.zero()
    subordinator: bool = False

    def __post_init__(self):
        if self.cp_intensity < 0:
            raise ValueError("cp_intensity must be >= 0")
        if self.brownian_sd < 0:
            raise ValueError("brownian_sd must be >= 0")
        if self.subordinator:
            if self.drift < 0 or self.brownian_sd != 0:
                raise ValueError("a subordinator needs drift >= 0 and no Brownian part")
            if self.cp_intensity > 0 and self.jump_law.support_min < 0:
                raise ValueError("subordinator jumps must be non-negative")

    @property
    def has_jumps(self) -> bool:
        return self.cp_intensity > 0 and not self.jump_law.is_zero

    @property
    def is_pure_jump(self) -> bool:
        return self.drift == 0 and self.brownian_sd == 0

    def to_json(self) -> dict:
        return {
            "drift": self.drift,
            "brownian_sd": self.brownian_sd,
            "cp_intensity": self.cp_intensity,
            "jump_law": self.jump_law.to_json(),
        }


def sample_jumps(spec: LevyDriverSpec, interval: tuple[float, float], rng: np.random.Generator):
    """Jump times and sizes of the compound-Poisson part on ``(t0, t1]``."""
    t0, t1 = interval
    if not t1 > t0:
        raise ValueError("interval must have t1 > t0")
    if spec.cp_intensity == 0:
        return np.empty(0), np.empty(0)
    n = rng.poisson(spec.cp_intensity * (t1 - t0))
    times = np.sort(rng.uniform(t0, t1, n))
    return times, spec.jump_law.sample(rng, n)


def levy_measure_moment(spec: LevyDriverSpec, n: int) -> float:
    """``int x**n nu(dx) = cp_intensity * E[Y**n]`` for ``n >= 1``."""
    if n < 1:
        raise ValueError("n must be >= 1 (nu has infinite total mass only at 0 for n=0)")
    return spec.cp_intensity * spec.jump_law.moment(n)


def levy_measure_tail_moment(spec: LevyDriverSpec, n: int, lower: float = 1.0) -> float:
    """``int_{(lower, inf)} x**n nu(dx)``."""
    if spec.cp_intensity == 0:
        return 0.0
    law = spec.jump_law
    if law.kind == "exponential":
        # upper incomplete gamma: int_c^inf x^n a e^{-ax} dx = Gamma(n+1, a c) / a^n
        lo = max(lower, 0.0)
        val = scipy.special.gammaincc(n + 1, law.a * lo) * math.gamma(n + 1) / law.a**n
        return spec.cp_intensity * val
    return spec.cp_intensity * law.expect(lambda y: y**n, lower, math.inf)


def driver_moment(spec: LevyDriverSpec, n: int) -> float:
    """Raw moment ``E[L_1**n]`` for ``n <= 4`` from the cumulants of ``L_1``."""
    if not 1 <= n <= 4:
        raise ValueError("driver moments are available for n in 1..4")
    c = spec.cp_intensity
    k1 = spec.drift + c * spec.jump_law.moment(1)
    k2 = spec.brownian_sd**2 + c * spec.jump_law.moment(2)
    k3 = c * spec.jump_law.moment(3)
    k4 = c * spec.jump_law.moment(4)
    return [
        k1,
        k2 + k1**2,
        k3 + 3 * k2 * k1 + k1**3,
        k4 + 4 * k3 * k1 + 3 * k2**2 + 6 * k2 * k1**2 + k1**4,
    ][n - 1]


class LogMoment(NamedTuple):
    finite: bool
    value: float


def log_moment(spec: LevyDriverSpec) -> LogMoment:
    """``int_{(1, inf)} log(q) nu(dq)``."""
    if spec.cp_intensity == 0 or spec.jump_law.is_zero:
        return LogMoment(True, 0.0)
    law = spec.jump_law
    if law.kind == "exponential":
        # integration by parts gives the exponential integral E1(rate)
        val = float(scipy.special.exp1(law.a))
    else:
        val = law.expect(math.log, 1.0, math.inf)
    val *= spec.cp_intensity
    return LogMoment(math.isfinite(val), val)


def cogarch_laplace_exponent(delta: float, lam: float, spec: LevyDriverSpec, w: float) -> float:
    """Laplace exponent of ``xi^(j)`` for the COGARCH regime ``(delta, lam)``.

    ``-w log(delta) + int ((1 + lam/delta y^2)^(-w) - 1) nu_L(dy)``; only the
    jump part of ``L`` enters.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    base = -w * math.log(delta)
    if w == 0 or lam == 0 or not spec.has_jumps:
        return base
    a = lam / delta
    law = spec.jump_law
    k = -w
    if float(k).is_integer() and k > 0:
        k = int(k)
        integral = sum(math.comb(k, m) * a**m * law.moment(2 * m) for m in range(1, k + 1))
    else:
        integral = law.expect(lambda y: (1.0 + a * y * y) ** (-w) - 1.0)
    if not math.isfinite(integral):
        raise DivergentIntegralError(f"Laplace exponent diverges at w={w}")
    return base + spec.cp_intensity * integral


def cogarch_log_integral(delta: float, lam: float, spec: LevyDriverSpec) -> float:
    """``int log(1 + lam/delta y^2) nu_L(dy)``."""
    if lam == 0 or not spec.has_jumps:
        return 0.0
    a = lam / delta
    val = spec.cp_intensity * spec.jump_law.expect(lambda y: math.log1p(a * y * y))
    if not math.isfinite(val):
        raise DivergentIntegralError("log-integral of the COGARCH jump map diverges")
    return val
