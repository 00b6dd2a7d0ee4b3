"""Markov-switching BNS volatility with a leverage term in the price."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .levy_drivers import LevyDriverSpec, driver_moment, levy_measure_moment, levy_measure_tail_moment, log_moment
from .map_engine import (
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
    MomentConditionError,
    PathBundle,
    RawPath,
    EventLog,
    autocov_vector,
    mean_and_autocov_core,
    moment_vectors,
    output_grid,
    regime_contraction,
    squared_return_cov_terms,
    start_values,
)
from .numerics import spectral_abscissa
from .stationarity import StationarityReport, switch_sup_log_moment
from .streams import path_rng

LOWER_BOUNDS = ("0", "1")


@dataclass(frozen=True, eq=False)
class MsbnsSpec:
    """Per-state ``lam, mu, beta, rho`` and subordinators, plus ``Q`` and the switch laws."""

    lam: np.ndarray
    mu: np.ndarray
    beta: np.ndarray
    rho: np.ndarray
    subordinators: tuple[LevyDriverSpec, ...]
    q: GeneratorMatrix
    switch_jumps: SwitchJumpLaw | None = None
    v0: float | str = "stationary"
    j0: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.q.n_states
        for name in ("lam", "mu", "beta", "rho"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per state ({n}), got {arr.shape[0]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.lam <= 0):
            raise ValueError("lambda must be > 0 in every state")
        subs = tuple(self.subordinators)
        if len(subs) != n:
            raise ValueError(f"need {n} subordinators, got {len(subs)}")
        for j, s in enumerate(subs):
            if not s.subordinator:
                raise ValueError(f"driver of state {j + 1} is not flagged as a subordinator")
        object.__setattr__(self, "subordinators", subs)
        if self.switch_jumps is None:
            object.__setattr__(self, "switch_jumps", SwitchJumpLaw.zero(n))
        if self.switch_jumps.n_states != n:
            raise ValueError("switch_jumps has the wrong number of states")
        self.switch_jumps.check_support(xi_nonnegative=True)
        if isinstance(self.v0, str):
            if self.v0 != "stationary":
                raise ValueError("v0 must be a number or 'stationary'")
        elif not self.v0 >= 0:
            raise ValueError("v0 must be >= 0")
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
    def driver_means(self) -> np.ndarray:
        """``E[L_1^{(j)}]``."""
        return np.array([driver_moment(s, 1) for s in self.subordinators])

    @property
    def is_martingale_price(self) -> bool:
        return not (np.any(self.mu) or np.any(self.beta) or np.any(self.rho))

    def to_json(self) -> dict:
        return {
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "beta": self.beta.tolist(),
            "rho": self.rho.tolist(),
            "subordinators": [s.to_json() for s in self.subordinators],
            "Q": self.q.to_json(),
            "switch_jumps": self.switch_jumps.to_json(),
            "v0": self.v0,
            "j0": None if self.j0 is None else self.j0 + 1,
        }


@dataclass(frozen=True)
class CompensatorSpec:
    """``eta_tilde = eta - int rate(J_s) ds``."""

    rate_vector: np.ndarray

    def to_json(self) -> dict:
        return {"rate_vector": self.rate_vector.tolist()}


def compensator(spec: MsbnsSpec) -> CompensatorSpec:
    """Rates ``lambda(j) E[L_1^(j)] + sum_i q_ji E[deta_2^{ji}]``."""
    f01 = f_matrix(spec.switch_jumps, 0, 1, spec.q).matrix
    rate = spec.lam * spec.driver_means + (spec.q.q * f01).sum(axis=1)
    if not np.all(np.isfinite(rate)):
        raise MomentConditionError("compensator rate is infinite")
    return CompensatorSpec(rate)


def psi_matrix(spec: MsbnsSpec, k: float) -> np.ndarray:
    """``Psi_xi(-k) = -k diag(lambda) + Q^T o F_{k,0}^T`` (unit diagonal in ``F``)."""
    key = ("psi", k)
    if key not in spec._cache:
        spec._cache[key] = matrix_exponent(-k * spec.lam, spec.q, spec.switch_jumps, -k)
    return spec._cache[key]


def _qf(spec: MsbnsSpec, k: float, n: int) -> np.ndarray:
    return spec.q.q.T * f_matrix(spec.switch_jumps, k, n, spec.q).matrix.T


def mean_source(spec: MsbnsSpec) -> np.ndarray:
    """``diag(lambda(j) E[L_1^(j)]) + Q^T o F_{1,1}^T``."""
    return np.diag(spec.lam * spec.driver_means) + _qf(spec, 1, 1)


def levy_pieces(spec: MsbnsSpec) -> list[LevyPiece]:
    return [
        LevyPiece(
            xi_drift=float(spec.lam[j]),
            eta_drift=float(spec.lam[j] * s.drift),
            jump_rate=float(spec.lam[j] * s.cp_intensity),
            jump_law=s.jump_law,
            eta_jump=lambda y: np.asarray(y, dtype=float).copy(),
        )
        for j, s in enumerate(spec.subordinators)
    ]


# ---------------------------------------------------------------- simulation


def _kernel_tables(spec: MsbnsSpec):
    if "kernel" not in spec._cache:
        rates, drv = kernel_driver_table(levy_pieces(spec))
        drifts = np.array([s.drift for s in spec.subordinators])
        spec._cache["kernel"] = (
            spec.q.exit_rates,
            spec.q.jump_cdf(),
            rates,
            drv,
            spec.switch_jumps.kernel_table(),
            drifts,
            spec.lam * drifts,
            compensator(spec).rate_vector,
        )
    return spec._cache["kernel"]


def stationary_guess(spec: MsbnsSpec) -> float:
    try:
        return float(stationary_moment(spec, 1)[0])
    except MomentConditionError:
        return float(np.dot(spec.pi, spec.driver_means))


def _burn_in_inputs(spec):
    if spec.v0 == "stationary":
        return stationary_guess(spec), psi_matrix(spec, 1)
    return 0.0, None


def run_path(spec: MsbnsSpec, rng: np.random.Generator, sample_t: np.ndarray) -> RawPath:
    """Simulate one path and observe it at ``sample_t`` (which must start at 0)."""
    sample_t = np.asarray(sample_t, dtype=float)
    if sample_t[0] != 0.0:
        raise ValueError("sample times must start at 0")
    exit_rates, cdf, rates, drv, sw, level, eta_drift, comp = _kernel_tables(spec)
    j0, v0, t0 = start_values(spec, rng, *_burn_in_inputs(spec))
    ev = _kernels.sample_map(rng, exit_rates, cdf, j0, t0 + sample_t[-1], rates, drv, sw)
    t, kind, s_from, s_to, a, b = ev
    out = _kernels.bns_path(
        rng, t, kind, s_to, a, b, j0, v0, spec.lam, level, spec.mu, spec.beta, spec.rho,
        eta_drift, comp, sample_t + t0, spec.n_states,
    )
    v_pre, v_post, dg, s_v, s_g, s_j, s_iv, s_iv2, occ, occ_v, occ_v2, s_eta = out
    return RawPath(s_v, s_g - s_g[0], s_j, s_iv, s_iv2, occ, occ_v, occ_v2, s_eta - s_eta[0], t0,
                   (t, kind, s_from, s_to, a, b, v_pre, v_post, dg))


def volatility_along(spec: MsbnsSpec, map_path: MapPath, v0: float, sample_t, rng) -> PathBundle:
    """Run the exact volatility/price recursion along a given MAP path.

    Events after the last sample time are not evaluated; their ``v_pre``,
    ``v_post`` and ``dg`` entries are NaN.
    """
    sample_t = np.asarray(sample_t, dtype=float)
    _, _, _, _, _, level, eta_drift, comp = _kernel_tables(spec)
    t, kind, s_to, a, b = map_path.kernel_events()
    v_pre, v_post, dg, s_v, s_g, s_j, *_, s_eta = _kernels.bns_path(
        rng, t, kind, s_to, a, b, int(map_path.regime.initial_state), float(v0), spec.lam, level,
        spec.mu, spec.beta, spec.rho, eta_drift, comp, sample_t, spec.n_states,
    )
    events = EventLog(map_path.time, map_path.kind, map_path.state_from, map_path.state_to,
                      map_path.raw, map_path.dxi, map_path.deta, v_pre, v_post, dg)
    return PathBundle(sample_t, s_v, s_g, s_j, events, s_eta)


def simulate(spec: MsbnsSpec, horizon: float, grid_dt: float, rng: np.random.Generator) -> PathBundle:
    """Exact event-driven path on ``0, grid_dt, ..., horizon`` (burn-in first for a stationary start)."""
    grid = output_grid(horizon, grid_dt)
    j0, v0, t0 = start_values(spec, rng, *_burn_in_inputs(spec))
    map_path = sample_map_path(levy_pieces(spec), spec.q, spec.switch_jumps, j0, t0 + horizon, rng)
    bundle = volatility_along(spec, map_path, v0, grid + t0, rng)
    if t0 == 0.0:
        return bundle
    return PathBundle(grid, bundle.v, bundle.g - bundle.g[0], bundle.j, bundle.events.shifted(t0),
                      bundle.eta_tilde - bundle.eta_tilde[0])


# ---------------------------------------------------------------- structure


class DegenerateResult(NamedTuple):
    degenerate: bool
    c: np.ndarray | None


def degenerate_check(spec: MsbnsSpec, tol: float = 1e-12) -> DegenerateResult:
    """Detect the deterministic stationary solution ``V = c_J``.

    Needs pure-drift subordinators ``L^(j)_t = c_j t`` and point-mass switch
    jumps with ``exp(-x)(y + c_i) = c_j`` on every pair with ``q_ij > 0``.
    """
    if any(s.has_jumps for s in spec.subordinators):
        return DegenerateResult(False, None)
    c = np.array([s.drift for s in spec.subordinators])
    n = spec.n_states
    for i in range(n):
        for j in range(n):
            if i == j or spec.q.q[i, j] == 0:
                continue
            law = spec.switch_jumps[i, j]
            if not law.is_point_mass:
                return DegenerateResult(False, None)
            lhs = math.exp(-law.xi.a) * (law.eta.a + c[i])
            if abs(lhs - c[j]) > tol * max(1.0, abs(c[j])):
                return DegenerateResult(False, None)
    return DegenerateResult(True, c)


def kappa_xi(spec: MsbnsSpec) -> float:
    switch = (spec.q.q * switch_xi_mean(spec.switch_jumps)).sum(axis=1)
    return float(np.dot(spec.pi, spec.lam + switch))


def stationarity_check(spec: MsbnsSpec, mc_budget: int = 2000, rng: np.random.Generator | None = None) -> StationarityReport:
    """Finite log-moments of every subordinator and of the switch-time suprema."""
    deg = degenerate_check(spec)
    if deg.degenerate:
        raise ValueError(f"spec has the deterministic solution V = c_J with c = {deg.c.tolist()}; see degenerate_check")
    rng = rng if rng is not None else np.random.default_rng(0)
    logs = [log_moment(s) for s in spec.subordinators]
    sup = switch_sup_log_moment(spec.q, spec.switch_jumps, mc_budget, rng)
    kappa = kappa_xi(spec)
    return StationarityReport(
        kappa=kappa,
        kappa_positive=kappa > 0,
        levy_log_moments=[{"finite": lm.finite, "value": lm.value} for lm in logs],
        switch_sup=sup,
        stationary=all(lm.finite for lm in logs) and sup.finite,
        notes=["kappa_xi > 0 holds automatically because every lambda(j) > 0"],
    )


def moment_conditions(spec: MsbnsSpec, k: int) -> ConditionReport:
    rep = ConditionReport(k)
    for j, s in enumerate(spec.subordinators):
        val = abs(driver_moment(s, k)) if k <= 4 else levy_measure_moment(s, k)
        rep.add(f"E|L_1^({j + 1})|^{k} finite", math.isfinite(val), float(val))
    exit_rates = spec.q.exit_rates
    if spec.n_states > 1:
        f_k0 = f_matrix(spec.switch_jumps, k, 0, spec.q).matrix
        worst = regime_contraction(exit_rates, exit_rates + k * spec.lam, spec.q.q, f_k0)
        for j in range(spec.n_states):
            rep.add(f"contraction excluding state {j + 1}", worst[j] < 1, float(worst[j]))
    a = spectral_abscissa(psi_matrix(spec, k))
    rep.add(f"spectral abscissa of Psi(-{k}) < 0", a < 0, float(a))
    fkk = f_matrix(spec.switch_jumps, k, k, spec.q).matrix
    rep.add(f"F_{k},{k} finite", bool(np.all(np.isfinite(fkk))), float(fkk.max(initial=0.0)))
    return rep


def _levy_integral(s: LevyDriverSpec, n: int, lower: str) -> float:
    if lower == "0":
        # the drift enters the first-order term
        return s.drift + levy_measure_moment(s, n) if n == 1 else levy_measure_moment(s, n)
    return levy_measure_tail_moment(s, n, 1.0)


def stationary_moment_vectors(spec: MsbnsSpec, k_max: int, lower: str = "0", form: str = "vector"):
    """``E_pi[V^k e_J]`` for ``k <= k_max``.

    ``lower`` picks the Levy integral over ``(0, inf)`` (``"0"``) or
    ``(1, inf)`` (``"1"``); ``form="printed"`` decouples regime and volatility
    in the lower-order terms.
    """
    if lower not in LOWER_BOUNDS:
        raise ValueError("lower must be '0' or '1'")
    if form not in ("vector", "printed"):
        raise ValueError("form must be 'vector' or 'printed'")
    reports = [moment_conditions(spec, k) for k in range(1, k_max + 1)]
    for rep in reports:
        rep.raise_if_failed()

    def source(k, n):
        levy = np.array([spec.lam[j] * _levy_integral(s, n, lower) for j, s in enumerate(spec.subordinators)])
        return np.diag(levy) + _qf(spec, k, n)

    vecs = moment_vectors(lambda k: psi_matrix(spec, k), source, spec.pi, k_max, printed=form == "printed")
    return vecs, reports


def stationary_moment(spec: MsbnsSpec, k: int, lower: str = "0", form: str = "vector") -> tuple[float, ConditionReport]:
    if k < 1:
        raise ValueError("k must be >= 1")
    key = ("moments", k, lower, form)
    if key not in spec._cache:
        vecs, reports = stationary_moment_vectors(spec, k, lower, form)
        spec._cache[key] = (float(vecs[k].sum()), reports[-1])
    return spec._cache[key]


def stationary_cov_inputs(spec: MsbnsSpec):
    vecs, _ = stationary_moment_vectors(spec, 2)
    m1, m2 = vecs[1], vecs[2]
    ev = m1.sum()
    return m2 - m1 * ev, m1 - spec.pi * ev


def mean_and_autocov(spec: MsbnsSpec, j0: int | None, t: float, s: float | None = None, inputs: dict | None = None) -> MeanCov:
    """Same contract as the MSCOGARCH version, with the BNS source term."""
    moment_conditions(spec, 1).raise_if_failed()
    inputs = inputs or {}
    if inputs.get("cov_vv") is not None:
        moment_conditions(spec, 2).raise_if_failed()
    return mean_and_autocov_core(psi_matrix(spec, 1), mean_source(spec), spec.q.q.T, spec.pi, j0, t, s, inputs)


def stationary_autocov(spec: MsbnsSpec, lags) -> np.ndarray:
    cov_vv, cov_jv = stationary_cov_inputs(spec)
    psi1, src, qt = psi_matrix(spec, 1), mean_source(spec), spec.q.q.T
    return np.array([autocov_vector(psi1, src, qt, cov_vv, cov_jv, float(tau))[0].sum() for tau in np.atleast_1d(lags)])


def squared_return_coefficients(spec: MsbnsSpec, r: float, h: float):
    """``(a, b, const)`` with ``cov_squared = a . E[G_r^2 V_r e_J] + b . E[G_r^2 e_J] - const``."""
    if not spec.is_martingale_price:
        raise ValueError("squared-return covariance needs mu = beta = rho = 0")
    a_mat, b_mat = squared_return_cov_terms(psi_matrix(spec, 1), mean_source(spec), spec.q.q.T, r, h)
    ones = np.ones(spec.n_states)
    ev = stationary_moment(spec, 1)[0]
    return ones @ a_mat, ones @ b_mat, (r * ev) ** 2


def return_mean(spec: MsbnsSpec, r: float) -> float:
    """``r mu.pi + r beta.E_pi[V e_J]`` (``int_0^r exp(Q^T s) ds pi = r pi``)."""
    f02 = f_matrix(spec.switch_jumps, 0, 2, spec.q).matrix
    if not np.all(np.isfinite(f02)):
        raise MomentConditionError("F_0,2 has infinite entries")
    vecs, _ = stationary_moment_vectors(spec, 1)
    return float(r * spec.mu @ spec.pi + r * spec.beta @ vecs[1])


def logreturn_moments(spec: MsbnsSpec, r: float, h: float | None = None, inner: dict | None = None) -> LogReturnMoments:
    """Return moments; parts beyond the mean need ``mu = beta = rho = 0``.

    With a non-martingale price only ``mean`` is filled (the rest are NaN).
    """
    if not r > 0:
        raise ValueError("r must be > 0")
    mean = return_mean(spec, r)
    if not spec.is_martingale_price:
        return LogReturnMoments(mean, math.nan, math.nan, None)
    ev = stationary_moment(spec, 1)[0]
    cov_sq = None
    if inner is not None:
        if h is None:
            raise ValueError("h is required for the squared-return covariance")
        stationary_moment(spec, 2)
        a, b, const = squared_return_coefficients(spec, r, h)
        cov_sq = float(a @ np.asarray(inner["gv"]) + b @ np.asarray(inner["g"]) - const)
    return LogReturnMoments(mean, float(r * ev), 0.0, cov_sq)


class MartingaleCheck(NamedTuple):
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    passed: bool

    def to_json(self) -> dict:
        return {"t": self.times.tolist(), "mean": self.mean.tolist(), "stderr": self.stderr.tolist(), "pass": self.passed}


def compensator_martingale_check(spec: MsbnsSpec, horizon: float, n_paths: int, seed: int, checkpoints=None) -> MartingaleCheck:
    """MC mean of ``eta_tilde_t`` at the checkpoints; pass iff every ``|mean| < 3 stderr``.

    Rows with zero spread must be exactly zero.
    """
    if n_paths < 2:
        raise ValueError("need at least 2 paths")
    times = np.asarray(checkpoints if checkpoints is not None else [horizon], dtype=float)
    sample_t = np.concatenate(([0.0], times))
    vals = np.empty((n_paths, times.size))
    for i in range(n_paths):
        vals[i] = run_path(spec, path_rng(seed, i), sample_t).eta_tilde[1:]
    mean = vals.mean(axis=0)
    err = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
    ok = np.where(err > 0, np.abs(mean) < 3 * err, np.abs(mean) <= 1e-9)
    return MartingaleCheck(times, mean, err, bool(np.all(ok)))
