"""Moment formulas shared by both Markov-modulated GOU volatility models.

Both models write the first-moment dynamics of ``m(t) = E[V_t e_{J_t}]`` as
``m' = Psi(-1) m + S p`` with ``p(t) = exp(Q^T t) p(0)``; they only differ in
the matrix exponent ``Psi`` and the source matrix ``S``.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .numerics import expm, solve, spectral_abscissa, van_loan_integral


class MomentConditionError(ValueError):
    """A sufficient condition for a moment formula fails."""


@dataclass
class ConditionReport:
    """Outcome of the checks behind a stationary-moment recursion."""

    k: int
    checks: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks)

    def add(self, name: str, ok: bool, value, detail: str = "") -> None:
        self.checks.append({"name": name, "ok": bool(ok), "value": value, "detail": detail})

    def failures(self) -> list[dict]:
        return [c for c in self.checks if not c["ok"]]

    def raise_if_failed(self) -> None:
        bad = self.failures()
        if bad:
            msg = "; ".join(f"{c['name']}: {c['detail'] or c['value']}" for c in bad)
            raise MomentConditionError(f"moment conditions fail at k={self.k}: {msg}")

    def to_json(self) -> dict:
        return {"k": self.k, "ok": self.ok, "checks": self.checks}


def mean_vector(psi1: np.ndarray, source: np.ndarray, qt: np.ndarray, m0, p0, t: float) -> np.ndarray:
    """``E[V_t e_{J_t}] = exp(Psi t) m0 + int_0^t exp(Psi (t-s)) S exp(Q^T s) ds p0``."""
    m0 = np.asarray(m0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    return expm(psi1 * t) @ m0 + van_loan_integral(psi1, source, qt, t) @ p0


def autocov_vector(psi1, source, qt, cov_vv, cov_jv, tau: float):
    """``Cov(e_{J_t} V_t, V_s)`` and ``Cov(e_{J_t}, V_s)`` for ``tau = t - s >= 0``.

    The series over powers of ``Psi`` and ``Q^T`` is the Van Loan block
    integral, so it is never truncated.
    """
    if tau < 0:
        raise ValueError("need s <= t")
    cov_vv = np.asarray(cov_vv, dtype=float)
    cov_jv = np.asarray(cov_jv, dtype=float)
    vec = expm(psi1 * tau) @ cov_vv + van_loan_integral(psi1, source, qt, tau) @ cov_jv
    return vec, expm(qt * tau) @ cov_jv


def moment_vectors(
    psi: Callable[[int], np.ndarray],
    source: Callable[[int, int], np.ndarray],
    pi: np.ndarray,
    k_max: int,
    printed: bool = False,
) -> list[np.ndarray]:
    """Stationary ``E_pi[V^k e_J]`` for ``k = 0..k_max``.

    ``m_k = -Psi(-k)^{-1} sum_n C(k, n) S_{k,n} m_{k-n}`` with ``m_0 = pi``.
    With ``printed=True`` each lower-order vector is replaced by
    ``pi * (1^T m_{k-n})``, i.e. volatility and regime treated as independent.
    """
    out = [np.asarray(pi, dtype=float)]
    for k in range(1, k_max + 1):
        rhs = np.zeros_like(out[0])
        for n in range(1, k + 1):
            prev = out[k - n]
            if printed:
                prev = out[0] * prev.sum()
            rhs += math.comb(k, n) * (source(k, n) @ prev)
        out.append(-solve(psi(k), rhs))
    return out


def regime_contraction(exit_rates: np.ndarray, damping: np.ndarray, q: np.ndarray, f_k0: np.ndarray):
    """``max_{i != j} damping_i^{-1} sum_{l not in {i, j}} q_il F^{il}_{k,0}`` for every ``j``.

    ``damping_i`` is ``|q_ii| - psi_i(-k)`` (COGARCH) or ``|q_ii| + k lambda_i`` (BNS).
    """
    n = len(exit_rates)
    worst = np.zeros(n)
    for j in range(n):
        vals = []
        for i in range(n):
            if i == j:
                continue
            s = sum(q[i, l] * f_k0[i, l] for l in range(n) if l not in (i, j))
            vals.append(s / damping[i] if damping[i] > 0 else math.inf)
        worst[j] = max(vals) if vals else 0.0
    return worst


def squared_return_cov_terms(psi1, source, qt, r: float, h: float):
    """Matrices ``(A, B)`` with ``Cov((G^r_t)^2, (G^r_{t+h})^2) = c 1^T A x + c 1^T B y - const``.

    ``A = Psi^{-1}(exp(h Psi) - exp((h-r) Psi))`` and
    ``B = Psi^{-1} int_0^h (exp(Psi(h-u)) - exp(Psi((h-u-r) v 0))) S exp(Q^T u) du``.
    The integral is split at ``u = h - r`` into Van Loan blocks.
    """
    if not h >= r > 0:
        raise ValueError("need h >= r > 0")
    n = psi1.shape[0]
    inv = np.linalg.inv(psi1)
    a = inv @ (expm(h * psi1) - expm((h - r) * psi1))
    tail = van_loan_integral(np.zeros((n, n)), np.eye(n), qt, h) - van_loan_integral(
        np.zeros((n, n)), np.eye(n), qt, h - r
    )
    integral = (
        van_loan_integral(psi1, source, qt, h)
        - van_loan_integral(psi1, source, qt, h - r)
        - source @ tail
    )
    return a, inv @ integral


def decay_rate(psi1: np.ndarray) -> float:
    return spectral_abscissa(psi1)


@dataclass(frozen=True, eq=False)
class EventLog:
    """Merged driver and switch events of one simulated path.

    ``kind`` is 0 for a driver jump (``raw`` is its size) and 1 for a regime
    switch (``dxi``/``deta`` are the drawn switch jumps).
    """

    time: np.ndarray
    kind: np.ndarray
    state_from: np.ndarray
    state_to: np.ndarray
    raw: np.ndarray
    dxi: np.ndarray
    deta: np.ndarray
    v_pre: np.ndarray
    v_post: np.ndarray
    dg: np.ndarray

    def __len__(self) -> int:
        return self.time.shape[0]

    @property
    def dv(self) -> np.ndarray:
        return self.v_post - self.v_pre

    def shifted(self, t0: float) -> EventLog:
        """Events after ``t0`` with times measured from ``t0``."""
        keep = self.time > t0
        return EventLog(
            self.time[keep] - t0,
            *(getattr(self, f)[keep] for f in ("kind", "state_from", "state_to", "raw", "dxi", "deta", "v_pre", "v_post", "dg")),
        )

    def to_json(self) -> list[dict]:
        """Event records with 1-based regime labels."""
        out = []
        for e in range(len(self)):
            rec = {
                "t": float(self.time[e]),
                "kind": "driver" if self.kind[e] == 0 else "switch",
                "from": int(self.state_from[e]) + 1,
                "to": int(self.state_to[e]) + 1,
                "dV": float(self.v_post[e] - self.v_pre[e]),
                "dG": float(self.dg[e]),
            }
            if self.kind[e] == 0:
                rec["dL"] = float(self.raw[e])
            else:
                rec["dxi"] = float(self.dxi[e])
                rec["deta"] = float(self.deta[e])
            out.append(rec)
        return out


@dataclass(frozen=True, eq=False)
class PathBundle:
    """``(t, J, V, G)`` on the output grid plus the event log (0-based ``j``)."""

    grid: np.ndarray
    v: np.ndarray
    g: np.ndarray
    j: np.ndarray
    events: EventLog
    eta_tilde: np.ndarray | None = None

    def to_csv(self, fh) -> None:
        """Write ``t,J,V,G`` with 1-based regimes and LF line endings."""
        fh.write("t,J,V,G\n")
        for t, j, v, g in zip(self.grid, self.j, self.v, self.g):
            fh.write(f"{float(t)!r},{int(j) + 1},{float(v)!r},{float(g)!r}\n")


def output_grid(horizon: float, grid_dt: float) -> np.ndarray:
    if not horizon > 0 or not grid_dt > 0:
        raise ValueError("horizon and grid_dt must be > 0")
    n = int(math.floor(horizon / grid_dt + 1e-9))
    grid = np.arange(n + 1) * grid_dt
    if grid[-1] < horizon - 1e-12 * horizon:
        grid = np.append(grid, horizon)
    return grid


def burn_in_time(psi1: np.ndarray, n_relax: float = 20.0) -> float:
    """``n_relax`` mean-reversion times of the first-moment dynamics."""
    a = spectral_abscissa(psi1)
    if not a < 0:
        raise MomentConditionError("spectral abscissa of Psi(-1) is not negative; no burn-in time")
    return n_relax / abs(a)


class RawPath(NamedTuple):
    """Kernel output for one path; sample-time arrays are relative to the burn-in end."""

    v: np.ndarray
    g: np.ndarray
    j: np.ndarray
    int_v: np.ndarray
    int_v2: np.ndarray
    occ: np.ndarray
    occ_v: np.ndarray
    occ_v2: np.ndarray
    eta_tilde: np.ndarray | None
    t0: float
    events: tuple


def start_values(spec, rng: np.random.Generator, stationary_mean: float, psi1: np.ndarray):
    """``(j0, v0, t0)``: the start state, start volatility and burn-in length."""
    j0 = spec.j0 if spec.j0 is not None else int(rng.choice(spec.n_states, p=spec.pi))
    if spec.v0 == "stationary":
        return j0, stationary_mean, burn_in_time(psi1)
    return j0, float(spec.v0), 0.0


class MeanCov(NamedTuple):
    mean: float
    cov_vector: np.ndarray | None
    cov: float | None
    cov_state: np.ndarray | None


def mean_and_autocov_core(psi1, source, qt, pi, j0, t, s, inputs) -> MeanCov:
    n = psi1.shape[0]
    if j0 is None:
        p0 = pi
        m0 = np.asarray(inputs.get("v0_mean", 0.0), dtype=float)
        m0 = m0 * pi if m0.ndim == 0 else m0
    else:
        p0 = np.eye(n)[j0]
        m0 = p0 * float(inputs.get("v0_mean", 0.0))
    mean = float(mean_vector(psi1, source, qt, m0, p0, t).sum())
    if inputs.get("cov_vv") is None:
        return MeanCov(mean, None, None, None)
    if s is None or s > t:
        raise ValueError("need s <= t for the covariance")
    vec, state = autocov_vector(psi1, source, qt, inputs["cov_vv"], inputs["cov_jv"], t - s)
    return MeanCov(mean, vec, float(vec.sum()), state)


class LogReturnMoments(NamedTuple):
    mean: float
    second_moment: float
    cov_disjoint: float
    cov_squared: float | None
