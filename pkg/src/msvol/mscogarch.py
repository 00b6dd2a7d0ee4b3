"""Markov-switching COGARCH(1,1) volatility and price."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .levy_drivers import LevyDriverSpec, cogarch_laplace_exponent, cogarch_log_integral, driver_moment
from .map_engine import (
    SWITCH,
    LevyPiece,
    MapPath,
    SwitchJumpLaw,
    f_matrix,
    kernel_driver_table,
    matrix_exponent,
    sample_map_path,
    switch_xi_mean,
)
from .markov_env import GeneratorMatrix, stationary_distribution
from .mmgou import (
    ConditionReport,
    LogReturnMoments,
    MeanCov,
    RawPath,
    mean_and_autocov_core,
    start_values,
    EventLog,
    MomentConditionError,
    PathBundle,
    autocov_vector,
    burn_in_time,
    mean_vector,
    moment_vectors,
    output_grid,
    regime_contraction,
    squared_return_cov_terms,
)
from .numerics import spectral_abscissa
from .stationarity import StationarityReport, switch_sup_log_moment


@dataclass(frozen=True, eq=False)
class MscogarchSpec:
    """Regime parameters ``beta, lam, delta`` (one entry per state), the shared driver and ``Q``.

    ``v0`` is a positive number or ``"stationary"`` (burn-in start); ``j0``
    is a 0-based start state, or ``None`` to draw it from ``pi``.
    """

    beta: np.ndarray
    lam: np.ndarray
    delta: np.ndarray
    driver: LevyDriverSpec
    q: GeneratorMatrix
    switch_jumps: SwitchJumpLaw | None = None
    v0: float | str = "stationary"
    j0: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.q.n_states
        for name in ("beta", "lam", "delta"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per state ({n}), got {arr.shape[0]}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.beta <= 0):
            raise ValueError("beta must be > 0 in every state")
        if np.any(self.lam < 0):
            raise ValueError("lambda must be >= 0 in every state")
        if np.any((self.delta <= 0) | (self.delta >= 1)):
            raise ValueError("delta must lie in (0, 1) in every state")
        if not self.driver.has_jumps:
            raise ValueError("the driver needs a non-zero Levy measure (cp_intensity > 0, non-zero jumps)")
        if self.switch_jumps is None:
            object.__setattr__(self, "switch_jumps", SwitchJumpLaw.zero(n))
        if self.switch_jumps.n_states != n:
            raise ValueError("switch_jumps has the wrong number of states")
        self.switch_jumps.check_support(xi_nonnegative=False)
        if isinstance(self.v0, str):
            if self.v0 != "stationary":
                raise ValueError("v0 must be a number or 'stationary'")
        elif not self.v0 > 0:
            raise ValueError("v0 must be > 0")
        if self.j0 is not None and not 0 <= self.j0 < n:
            raise ValueError("j0 out of range")

    @property
    def n_states(self) -> int:
        return self.q.n_states

    @property
    def pi(self) -> np.ndarray:
        if "pi" not in self._cache:
            self._cache["pi"] = stationary_distribution(self.q)
        return self._cache["pi"]

    @property
    def jump_mult(self) -> np.ndarray:
        return self.lam / self.delta

    def to_json(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "lambda": self.lam.tolist(),
            "delta": self.delta.tolist(),
            "driver": self.driver.to_json(),
            "Q": self.q.to_json(),
            "switch_jumps": self.switch_jumps.to_json(),
            "v0": self.v0,
            "j0": None if self.j0 is None else self.j0 + 1,
        }


def laplace_exponents(spec: MscogarchSpec, w: float) -> np.ndarray:
    """``psi_j(w)`` for every state."""
    return np.array(
        [cogarch_laplace_exponent(d, l, spec.driver, w) for d, l in zip(spec.delta, spec.lam)]
    )


def psi_matrix(spec: MscogarchSpec, k: float) -> np.ndarray:
    """``Psi_xi(-k)``."""
    key = ("psi", k)
    if key not in spec._cache:
        spec._cache[key] = matrix_exponent(laplace_exponents(spec, -k), spec.q, spec.switch_jumps, -k)
    return spec._cache[key]


def _qf(spec: MscogarchSpec, k: float, n: int) -> np.ndarray:
    return spec.q.q.T * f_matrix(spec.switch_jumps, k, n, spec.q).matrix.T


def mean_source(spec: MscogarchSpec) -> np.ndarray:
    """``diag(beta) + Q^T o F_{1,1}^T``."""
    return np.diag(spec.beta) + _qf(spec, 1, 1)


def levy_pieces(spec: MscogarchSpec) -> list[LevyPiece]:
    pieces = []
    for j in range(spec.n_states):
        a = spec.jump_mult[j]
        pieces.append(
            LevyPiece(
                xi_drift=-math.log(spec.delta[j]),
                eta_drift=float(spec.beta[j]),
                jump_rate=spec.driver.cp_intensity,
                jump_law=spec.driver.jump_law,
                xi_jump=lambda y, a=a: -np.log1p(a * y * y),
            )
        )
    return pieces


# ---------------------------------------------------------------- simulation


def _kernel_tables(spec: MscogarchSpec):
    if "kernel" not in spec._cache:
        rates, drv = kernel_driver_table(levy_pieces(spec))
        spec._cache["kernel"] = (
            spec.q.exit_rates,
            spec.q.jump_cdf(),
            rates,
            drv,
            spec.switch_jumps.kernel_table(),
            np.log(spec.delta),
            -spec.beta / np.log(spec.delta),
            spec.jump_mult,
        )
    return spec._cache["kernel"]


def stationary_guess(spec: MscogarchSpec) -> float:
    try:
        return float(stationary_moment(spec, 1)[0])
    except MomentConditionError:
        return float(np.dot(spec.pi, spec.beta / -np.log(spec.delta)))


def run_path(spec: MscogarchSpec, rng: np.random.Generator, sample_t: np.ndarray) -> RawPath:
    """Simulate one path and observe it at ``sample_t`` (which must start at 0)."""
    sample_t = np.asarray(sample_t, dtype=float)
    if sample_t[0] != 0.0:
        raise ValueError("sample times must start at 0")
    exit_rates, cdf, rates, drv, sw, log_delta, level, mult = _kernel_tables(spec)
    j0, v0, t0 = start_values(spec, rng, stationary_guess(spec) if spec.v0 == "stationary" else 0.0,
                              psi_matrix(spec, 1) if spec.v0 == "stationary" else None)
    horizon = t0 + sample_t[-1]
    ev = _kernels.sample_map(rng, exit_rates, cdf, j0, horizon, rates, drv, sw)
    t, kind, s_from, s_to, a, b = ev
    d = spec.driver
    out = _kernels.cogarch_path(
        rng, t, kind, s_to, a, b, j0, v0, log_delta, level, mult, d.drift, d.brownian_sd,
        sample_t + t0, spec.n_states,
    )
    v_pre, v_post, dg, s_v, s_g, s_j, s_iv, s_iv2, occ, occ_v, occ_v2 = out
    return RawPath(s_v, s_g - s_g[0], s_j, s_iv, s_iv2, occ, occ_v, occ_v2, None, t0,
                   (t, kind, s_from, s_to, a, b, v_pre, v_post, dg))


def _event_log(spec, map_path: MapPath, v_pre, v_post, dg) -> EventLog:
    return EventLog(map_path.time, map_path.kind, map_path.state_from, map_path.state_to,
                    map_path.raw, map_path.dxi, map_path.deta, v_pre, v_post, dg)


def volatility_along(spec: MscogarchSpec, map_path: MapPath, v0: float, sample_t, rng) -> PathBundle:
    """Run the exact volatility/price recursion along a given MAP path.

    Events after the last sample time are not evaluated; their ``v_pre``,
    ``v_post`` and ``dg`` entries are NaN.
    """
    sample_t = np.asarray(sample_t, dtype=float)
    _, _, _, _, _, log_delta, level, mult = _kernel_tables(spec)
    t, kind, s_to, a, b = map_path.kernel_events()
    d = spec.driver
    v_pre, v_post, dg, s_v, s_g, s_j, *_ = _kernels.cogarch_path(
        rng, t, kind, s_to, a, b, int(map_path.regime.initial_state), float(v0), log_delta, level,
        mult, d.drift, d.brownian_sd, sample_t, spec.n_states,
    )
    return PathBundle(sample_t, s_v, s_g, s_j, _event_log(spec, map_path, v_pre, v_post, dg))


def simulate(spec: MscogarchSpec, horizon: float, grid_dt: float, rng: np.random.Generator) -> PathBundle:
    """Exact event-driven path sampled on ``0, grid_dt, ..., horizon``.

    With ``v0="stationary"`` the path is started at the stationary mean, run
    for the burn-in time and then re-timed so that the bundle starts at 0.
    """
    grid = output_grid(horizon, grid_dt)
    stationary = spec.v0 == "stationary"
    j0, v0, t0 = start_values(spec, rng, stationary_guess(spec) if stationary else 0.0,
                              psi_matrix(spec, 1) if stationary else None)
    map_path = sample_map_path(levy_pieces(spec), spec.q, spec.switch_jumps, j0, t0 + horizon, rng)
    bundle = volatility_along(spec, map_path, v0, grid + t0, rng)
    if t0 == 0.0:
        return bundle
    return PathBundle(grid, bundle.v, bundle.g - bundle.g[0], bundle.j, bundle.events.shifted(t0))


# ---------------------------------------------------------------- (U, K)


@dataclass(frozen=True, eq=False)
class UKPath:
    """Pathwise ``(U, K)``: per-regime drifts plus jumps at the MAP events."""

    time: np.ndarray
    du: np.ndarray
    dk: np.ndarray
    regime: object  # RegimePath
    u_drift: np.ndarray
    k_drift: np.ndarray
    is_switch: np.ndarray

    def _drift(self, rates, t):
        times = self.regime.times
        edges = np.concatenate(([0.0], times))
        per = rates[self.regime.states]
        cum = np.concatenate(([0.0], np.cumsum(per[:-1] * np.diff(edges))))
        idx = np.searchsorted(times, t, side="right")
        return cum[idx] + per[idx] * (t - edges[idx])

    def u_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        jumps = np.concatenate(([0.0], np.cumsum(self.du)))[np.searchsorted(self.time, t, side="right")]
        return self._drift(self.u_drift, t) + jumps

    def k_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        jumps = np.concatenate(([0.0], np.cumsum(self.dk)))[np.searchsorted(self.time, t, side="right")]
        return self._drift(self.k_drift, t) + jumps

    def integrate(self, v0: float):
        """Solve ``dV = V- dU + dK`` exactly; returns ``(V(T-), V(T))`` at every event."""
        n = self.time.shape[0]
        pre = np.empty(n)
        post = np.empty(n)
        v, t = float(v0), 0.0
        states = self.regime.states
        sw_idx = 0
        j = int(states[0])
        for e in range(n):
            tau = self.time[e] - t
            r, kk = self.u_drift[j], self.k_drift[j]
            # dV = (kk + r V) dt
            v = -kk / r + (v + kk / r) * math.exp(r * tau)
            pre[e] = v
            v = v + v * self.du[e] + self.dk[e]
            post[e] = v
            t = self.time[e]
            if self.is_switch[e]:
                sw_idx += 1
                j = int(states[sw_idx])
        return pre, post


def uk_representation(spec: MscogarchSpec, map_path: MapPath) -> UKPath:
    """``U``: drift ``log delta(J)``, jumps ``(lambda/delta)(dL)^2`` and ``exp(-dxi_2) - 1``;
    ``K``: drift ``beta(J)``, jumps ``exp(-dxi_2) deta_2``."""
    sw = map_path.kind == SWITCH
    mult = spec.jump_mult[map_path.state_from]
    raw = np.where(sw, 0.0, map_path.raw)
    du = np.where(sw, np.expm1(-map_path.dxi), mult * raw * raw)
    dk = np.where(sw, np.exp(-map_path.dxi) * map_path.deta, 0.0)
    return UKPath(map_path.time, du, dk, map_path.regime, np.log(spec.delta), spec.beta.copy(), sw)


# ---------------------------------------------------------------- analytics


def kappa_xi(spec: MscogarchSpec) -> float:
    """Stationary mean drift of ``xi``."""
    logs = np.array([cogarch_log_integral(d, l, spec.driver) for d, l in zip(spec.delta, spec.lam)])
    switch = (spec.q.q * switch_xi_mean(spec.switch_jumps)).sum(axis=1)
    return float(np.dot(spec.pi, -np.log(spec.delta) - logs + switch))


def stationarity_check(spec: MscogarchSpec, mc_budget: int = 2000, rng: np.random.Generator | None = None) -> StationarityReport:
    """Sign of ``kappa_xi`` plus the switch-supremum log-moment condition."""
    if np.all(spec.lam == 0):
        raise ValueError("stationarity theory needs lambda(j) > 0 for some state")
    rng = rng if rng is not None else np.random.default_rng(0)
    kappa = kappa_xi(spec)
    sup = switch_sup_log_moment(spec.q, spec.switch_jumps, mc_budget, rng)
    return StationarityReport(
        kappa=kappa,
        kappa_positive=kappa > 0,
        levy_log_moments=None,
        switch_sup=sup,
        stationary=kappa > 0 and sup.finite,
        notes=[],
    )


def moment_conditions(spec: MscogarchSpec, k: int) -> ConditionReport:
    rep = ConditionReport(k)
    psi_k = laplace_exponents(spec, -k)
    exit_rates = spec.q.exit_rates
    for j in range(spec.n_states):
        if spec.n_states > 1:
            rep.add(f"psi_{j + 1}(-{k}) < |q_{j + 1}{j + 1}|", psi_k[j] < exit_rates[j], float(psi_k[j]))
    if spec.n_states > 1:
        f_k0 = f_matrix(spec.switch_jumps, k, 0, spec.q).matrix
        worst = regime_contraction(exit_rates, exit_rates - psi_k, spec.q.q, f_k0)
        for j in range(spec.n_states):
            rep.add(f"contraction excluding state {j + 1}", worst[j] < 1, float(worst[j]))
    a = spectral_abscissa(psi_matrix(spec, k))
    rep.add(f"spectral abscissa of Psi(-{k}) < 0", a < 0, float(a))
    for (i, j), law in spec.switch_jumps.table.items():
        # coordinates are independent, so the mixed moment factorises
        val = law.xi.expect(lambda x: math.exp(-k * abs(x))) * law.eta.moment(k)
        rep.add(f"mixed moment {i + 1}->{j + 1} finite", math.isfinite(val), float(val))
    return rep


def stationary_moment_vectors(spec: MscogarchSpec, k_max: int, form: str = "vector") -> tuple[list[np.ndarray], list[ConditionReport]]:
    """``E_pi[V^k e_J]`` for ``k <= k_max`` together with the checked conditions.

    ``form="printed"`` decouples regime and volatility in the lower-order terms.
    """
    if form not in ("vector", "printed"):
        raise ValueError("form must be 'vector' or 'printed'")
    reports = [moment_conditions(spec, k) for k in range(1, k_max + 1)]
    for rep in reports:
        rep.raise_if_failed()

    def source(k, n):
        s = _qf(spec, k, n)
        if n == 1:
            s = s + np.diag(spec.beta)
        return s

    vecs = moment_vectors(lambda k: psi_matrix(spec, k), source, spec.pi, k_max, printed=form == "printed")
    return vecs, reports


def stationary_moment(spec: MscogarchSpec, k: int, form: str = "vector") -> tuple[float, ConditionReport]:
    """``E_pi[V_infty^k]`` and the condition report for order ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    key = ("moments", k, form)
    if key not in spec._cache:
        vecs, reports = stationary_moment_vectors(spec, k, form)
        spec._cache[key] = (float(vecs[k].sum()), reports[-1])
    return spec._cache[key]


def product_formula_moment(spec: MscogarchSpec, k: int) -> float:
    """``k! prod_n (-1^T Psi(-n)^{-1} diag(beta) pi)``.

    With no ``eta`` switch jumps this is what the decoupled (``form="printed"``)
    recursion reduces to.  It matches the default recursion only for a single
    regime; with several regimes ``V`` and ``J`` are dependent and the nested
    product ``prod_n (-Psi(-n)^{-1} n diag(beta))`` applied to ``pi`` is needed.
    """
    out = float(math.factorial(k))
    for n in range(1, k + 1):
        out *= float(-np.ones(spec.n_states) @ np.linalg.solve(psi_matrix(spec, n), spec.beta * spec.pi))
    return out


def stationary_cov_inputs(spec: MscogarchSpec):
    """Stationary ``Cov(e_J V, V)`` and ``Cov(e_J, V)`` from the moment vectors."""
    vecs, _ = stationary_moment_vectors(spec, 2)
    m1, m2 = vecs[1], vecs[2]
    ev = m1.sum()
    return m2 - m1 * ev, m1 - spec.pi * ev


def mean_and_autocov(spec: MscogarchSpec, j0: int | None, t: float, s: float | None = None, inputs: dict | None = None) -> MeanCov:
    """``E_j[V_t]`` and ``Cov_j(V_t, V_s)``.

    ``inputs`` holds ``v0_mean`` (``E_j[V_0]``, or a vector ``E[V_0 e_{J_0}]``
    when ``j0`` is ``None``), and optionally ``cov_vv = Cov(e_{J_s} V_s, V_s)``
    and ``cov_jv = Cov(e_{J_s}, V_s)``.
    """
    moment_conditions(spec, 1).raise_if_failed()
    inputs = inputs or {}
    if inputs.get("cov_vv") is not None:
        moment_conditions(spec, 2).raise_if_failed()
    return mean_and_autocov_core(psi_matrix(spec, 1), mean_source(spec), spec.q.q.T, spec.pi, j0, t, s, inputs)


def stationary_autocov(spec: MscogarchSpec, lags) -> np.ndarray:
    """``Cov_pi(V_{s+tau}, V_s)`` for every lag."""
    cov_vv, cov_jv = stationary_cov_inputs(spec)
    psi1, src, qt = psi_matrix(spec, 1), mean_source(spec), spec.q.q.T
    return np.array([autocov_vector(psi1, src, qt, cov_vv, cov_jv, float(tau))[0].sum() for tau in np.atleast_1d(lags)])


def squared_return_coefficients(spec: MscogarchSpec, r: float, h: float):
    """``(a, b, const)`` with ``cov_squared = a . E[G_r^2 V_r e_J] + b . E[G_r^2 e_J] - const``."""
    _check_centered(spec)
    l2 = driver_moment(spec.driver, 2)
    a_mat, b_mat = squared_return_cov_terms(psi_matrix(spec, 1), mean_source(spec), spec.q.q.T, r, h)
    ones = np.ones(spec.n_states)
    ev = stationary_moment(spec, 1)[0]
    return l2 * (ones @ a_mat), l2 * (ones @ b_mat), (l2 * r * ev) ** 2


def _check_centered(spec: MscogarchSpec) -> None:
    if not spec.driver.is_pure_jump:
        raise ValueError("log-return moments need a pure-jump driver")
    if abs(driver_moment(spec.driver, 1)) > 1e-12:
        raise ValueError("log-return moments need a centred driver (E[L_1] = 0)")


def logreturn_moments(spec: MscogarchSpec, r: float, h: float | None = None, inner: dict | None = None) -> LogReturnMoments:
    """Moments of ``G_{t+r} - G_t`` under the stationary law.

    ``inner`` supplies ``gv = E_pi[G_r^2 V_r e_{J_r}]`` and ``g = E_pi[G_r^2 e_{J_r}]``
    (both length-N); without it ``cov_squared`` is ``None``.
    """
    if not r > 0:
        raise ValueError("r must be > 0")
    _check_centered(spec)
    ev, rep = stationary_moment(spec, 1)
    second = driver_moment(spec.driver, 2) * r * ev
    cov_sq = None
    if inner is not None:
        if h is None:
            raise ValueError("h is required for the squared-return covariance")
        stationary_moment(spec, 2)
        a, b, const = squared_return_coefficients(spec, r, h)
        cov_sq = float(a @ np.asarray(inner["gv"]) + b @ np.asarray(inner["g"]) - const)
    return LogReturnMoments(0.0, float(second), 0.0, cov_sq)


__all__ = [
    "MscogarchSpec",
    "RawPath",
    "UKPath",
    "MeanCov",
    "LogReturnMoments",
    "laplace_exponents",
    "psi_matrix",
    "mean_source",
    "levy_pieces",
    "run_path",
    "simulate",
    "volatility_along",
    "uk_representation",
    "kappa_xi",
    "stationarity_check",
    "moment_conditions",
    "stationary_moment",
    "stationary_moment_vectors",
    "product_formula_moment",
    "stationary_cov_inputs",
    "mean_and_autocov",
    "stationary_autocov",
    "squared_return_coefficients",
    "logreturn_moments",
]
