"""Ensemble runner and analytic-vs-Monte-Carlo comparison.

Every path draws from its own stream (see :mod:`msvol.streams`) and per-path
values are stacked in path order before any reduction, so results do not
depend on the number of workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import msbns, mscogarch
from .msbns import MsbnsSpec
from .mscogarch import MscogarchSpec
from .streams import path_rng

Z_PASS = 3.0


def _model(spec):
    if isinstance(spec, MscogarchSpec):
        return mscogarch
    if isinstance(spec, MsbnsSpec):
        return msbns
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


@dataclass(frozen=True)
class Functional:
    """What to record on each path.

    ``kind`` is one of ``v_mean`` (``V`` at ``times``), ``time_average``
    (``(1/T) int V^k``, ``k = 1, 2`` over ``horizon``), ``occupation``,
    ``regime_mean`` (time average of ``V`` within each regime),
    ``returns`` (log-return products for ``r``, ``h`` and disjoint ``lags``),
    ``eta_tilde`` (the compensated ``eta`` at ``times``) and ``autocov``
    (path averages of ``V_t`` and ``V_t V_{t+lag}`` on a grid of step ``dt``).
    """

    kind: str
    times: tuple[float, ...] = ()
    horizon: float = 0.0
    r: float = 1.0
    h: float = 2.0
    lags: tuple[float, ...] = (1, 2, 3, 4, 5)
    dt: float = 0.5

    def __post_init__(self):
        if self.kind not in ("v_mean", "time_average", "occupation", "regime_mean", "returns", "eta_tilde", "autocov"):
            raise ValueError(f"unknown functional {self.kind!r}")
        if self.kind in ("v_mean", "eta_tilde") and not self.times:
            raise ValueError(f"{self.kind} needs sample times")
        if self.kind in ("time_average", "occupation", "regime_mean", "autocov") and not self.horizon > 0:
            raise ValueError(f"{self.kind} needs a positive horizon")
        if self.kind == "returns" and not self.h >= self.r > 0:
            raise ValueError("returns need h >= r > 0")
        if self.kind == "autocov":
            steps = [lag / self.dt for lag in self.lags]
            if not self.dt > 0 or any(x < 0 or abs(x - round(x)) > 1e-9 for x in steps):
                raise ValueError("autocov lags must be non-negative multiples of dt")
            if max(steps) * self.dt >= self.horizon:
                raise ValueError("autocov lags must be shorter than the horizon")

    def sample_times(self) -> np.ndarray:
        if self.kind in ("v_mean", "eta_tilde"):
            return np.unique(np.concatenate(([0.0], self.times)))
        if self.kind == "returns":
            pts = [0.0, self.r, self.h, self.h + self.r]
            pts += [x * self.r for lag in self.lags for x in (lag, lag + 1)]
            return np.unique(pts)
        if self.kind == "autocov":
            n = int(round(self.horizon / self.dt))
            return np.arange(n + 1) * self.dt
        return np.array([0.0, self.horizon])

    def labels(self, n_states: int) -> list[str]:
        if self.kind == "v_mean":
            return [f"E[V_t] t={t:g}" for t in self.times]
        if self.kind == "eta_tilde":
            return [f"E[eta_tilde_t] t={t:g}" for t in self.times]
        if self.kind == "time_average":
            return ["E[V]", "E[V^2]"]
        if self.kind == "occupation":
            return [f"occupation {j + 1}" for j in range(n_states)]
        if self.kind == "regime_mean":
            return [f"E[V | J={j + 1}]" for j in range(n_states)]
        if self.kind == "autocov":
            return ["E[V]"] + [f"E[V_t V_t+{lag:g}]" for lag in self.lags]
        out = ["E[R]", "E[R^2]"] + [f"E[R_0 R_{lag}]" for lag in self.lags] + ["E[R_0^2 R_h^2]"]
        out += [f"E[G_r^2 V_r; J_r={j + 1}]" for j in range(n_states)]
        out += [f"E[G_r^2; J_r={j + 1}]" for j in range(n_states)]
        return out

    def extract(self, raw, n_states: int) -> np.ndarray:
        st = self.sample_times()
        at = {float(t): i for i, t in enumerate(st)}
        if self.kind == "v_mean":
            return np.array([raw.v[at[float(t)]] for t in self.times])
        if self.kind == "eta_tilde":
            return np.array([raw.eta_tilde[at[float(t)]] for t in self.times])
        if self.kind == "time_average":
            return np.array([raw.int_v[1], raw.int_v2[1]]) / self.horizon
        if self.kind == "occupation":
            return raw.occ / self.horizon
        if self.kind == "regime_mean":
            with np.errstate(invalid="ignore", divide="ignore"):
                return raw.occ_v / raw.occ
        if self.kind == "autocov":
            v = raw.v
            out = [v.mean()]
            for lag in self.lags:
                k = int(round(lag / self.dt))
                out.append(np.dot(v[: v.size - k], v[k:]) / (v.size - k))
            return np.array(out)
        g = raw.g

        def ret(a: float) -> float:
            return g[at[float(a + self.r)]] - g[at[float(a)]]

        r0, rh = ret(0.0), ret(self.h)
        lagged = [r0 * ret(lag * self.r) for lag in self.lags]
        onehot = np.zeros(n_states)
        onehot[raw.j[at[float(self.r)]]] = 1.0
        gr2 = g[at[float(self.r)]] ** 2
        vr = raw.v[at[float(self.r)]]
        return np.concatenate(([r0, r0 * r0], lagged, [r0 * r0 * rh * rh], gr2 * vr * onehot, gr2 * onehot))

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.times:
            out["times"] = list(self.times)
        if self.horizon:
            out["horizon"] = self.horizon
        if self.kind == "returns":
            out.update(r=self.r, h=self.h, lags=list(self.lags))
        if self.kind == "autocov":
            out.update(lags=list(self.lags), dt=self.dt)
        return out


@dataclass(frozen=True)
class EnsembleEstimate:
    name: str
    n_paths: int
    mean: float
    stderr: float

    @property
    def ci95(self) -> tuple[float, float]:
        return self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr

    def to_json(self) -> dict:
        return {"name": self.name, "n_paths": self.n_paths, "mean": self.mean, "stderr": self.stderr, "ci95": list(self.ci95)}


def estimate(name: str, values: np.ndarray) -> EnsembleEstimate:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    n = values.size
    if n < 2:
        raise ValueError("need at least 2 finite samples")
    return EnsembleEstimate(name, n, float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)))


@dataclass(frozen=True, eq=False)
class EnsembleSample:
    """Per-path values, one row per path in path order."""

    functional: Functional
    labels: list[str]
    values: np.ndarray
    master_seed: int
    burn_in: float

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def estimates(self) -> list[EnsembleEstimate]:
        return [estimate(lab, self.values[:, i]) for i, lab in enumerate(self.labels)]

    def estimate(self, label: str) -> EnsembleEstimate:
        return estimate(label, self.column(label))


def _chunk(spec, functional: Functional, seed: int, lo: int, hi: int) -> np.ndarray:
    model = _model(spec)
    st = functional.sample_times()
    rows = []
    burn = 0.0
    for i in range(lo, hi):
        raw = model.run_path(spec, path_rng(seed, i), st)
        burn = raw.t0
        rows.append(functional.extract(raw, spec.n_states))
    return np.array(rows), burn


def run_ensemble(spec, functional: Functional, n_paths: int, master_seed: int, workers: int = 1) -> EnsembleSample:
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    workers = max(1, int(workers))
    if workers == 1:
        values, burn = _chunk(spec, functional, master_seed, 0, n_paths)
    else:
        n_chunks = min(n_paths, 4 * workers)
        edges = np.linspace(0, n_paths, n_chunks + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_chunk, spec, functional, master_seed, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
            parts = [f.result() for f in futs]
        values = np.concatenate([p[0] for p in parts])
        burn = parts[0][1]
    return EnsembleSample(functional, functional.labels(spec.n_states), values, int(master_seed), float(burn))


def ensemble_estimate(spec, functional: Functional, n_paths: int, master_seed: int, workers: int = 1) -> list[EnsembleEstimate]:
    """One estimate per recorded quantity of the functional."""
    return run_ensemble(spec, functional, n_paths, master_seed, workers).estimates()


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class ReportRow:
    quantity: str
    analytic: float
    mc: float
    stderr: float
    n_paths: int
    threshold: float = Z_PASS

    @property
    def deterministic(self) -> bool:
        return self.stderr == 0

    @property
    def z(self) -> float:
        diff = self.mc - self.analytic
        if self.deterministic:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    @property
    def passed(self) -> bool:
        if self.deterministic:
            return abs(self.mc - self.analytic) <= 1e-9
        return abs(self.z) < self.threshold

    def to_json(self) -> dict:
        z = self.z
        return {
            "quantity": self.quantity,
            "analytic": self.analytic,
            "mc": self.mc,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "z": z if math.isfinite(z) else str(z),
            "threshold": self.threshold,
            "pass": self.passed,
        }


@dataclass
class ValidationReport:
    rows: list[ReportRow]
    seed: int
    budgets: dict
    burn_in: float | None = None
    config: dict | None = None
    notes: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[ReportRow]:
        return [r for r in self.rows if not r.passed]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "budgets": self.budgets,
            "burn_in": self.burn_in,
            "all_pass": self.all_passed,
            "rows": [r.to_json() for r in self.rows],
            "notes": self.notes,
            "config": self.config,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def compare_report(pairs, seed: int = 0, budgets: dict | None = None, **kw) -> ValidationReport:
    """Rows from ``(quantity, analytic, EnsembleEstimate)`` or ``(quantity, analytic, estimate, threshold)``."""
    rows = []
    for item in pairs:
        name, analytic, est, *rest = item
        thr = rest[0] if rest else Z_PASS
        rows.append(ReportRow(name, float(analytic), est.mean, est.stderr, est.n_paths, thr))
    return ValidationReport(rows, int(seed), budgets or {}, **kw)


def band_threshold(n_tests: int, level: float = 0.95) -> float:
    """Half-width in stderr units of a simultaneous two-sided band over ``n_tests`` quantities."""
    per = level ** (1.0 / n_tests)
    return float(stats.norm.ppf(0.5 + per / 2))


# ---------------------------------------------------------------- checks used by validate


def mean_rows(spec, times, n_paths: int, seed: int, workers: int = 1):
    """``E_j[V_t]`` rows; the spec must have a fixed ``v0`` and ``j0``."""
    if spec.v0 == "stationary" or spec.j0 is None:
        raise ValueError("mean validation needs a fixed v0 and j0")
    model = _model(spec)
    sample = run_ensemble(spec, Functional("v_mean", tuple(times)), n_paths, seed, workers)
    out = []
    for t, est in zip(times, sample.estimates()):
        analytic = model.mean_and_autocov(spec, spec.j0, t, inputs={"v0_mean": spec.v0}).mean
        out.append((f"E_{spec.j0 + 1}[V_t] t={t:g}", analytic, est))
    return out


def stationary_moment_rows(spec, horizon: float, n_paths: int, seed: int, workers: int = 1):
    model = _model(spec)
    sample = run_ensemble(spec, Functional("time_average", horizon=horizon), n_paths, seed, workers)
    est = sample.estimates()
    return [(f"E_pi[V^{k}]", model.stationary_moment(spec, k)[0], est[k - 1]) for k in (1, 2)], sample


def lower_bound_arbitration(spec: MsbnsSpec, sample: EnsembleSample, k: int = 2) -> dict:
    """z-scores of both Levy-integral variants against the time averages at order ``k``."""
    est = sample.estimates()[k - 1]
    out = {}
    for lower in msbns.LOWER_BOUNDS:
        val = msbns.stationary_moment(spec, k, lower=lower)[0]
        z = (est.mean - val) / est.stderr
        out[f"({lower},inf)"] = {"analytic": val, "z": z, "pass": abs(z) < Z_PASS}
    winners = [key for key, v in out.items() if v["pass"]]
    out["selected"] = winners[0] if len(winners) == 1 else None
    return out


def autocov_estimates(sample: EnsembleSample) -> list[EnsembleEstimate]:
    """``Cov_pi(V_t, V_{t+lag})`` from an ``autocov`` sample.

    The estimate is ``mean(P_lag) - mean(M)^2`` with ``M`` the path averages of
    ``V`` and ``P_lag`` those of the lagged products; the stderr linearises it
    as the per-path quantity ``P_lag - 2 mean(M) M``.
    """
    if sample.functional.kind != "autocov":
        raise ValueError("need an autocov sample")
    m = sample.column("E[V]")
    mbar = float(m.mean())
    out = []
    for lag in sample.functional.lags:
        p = sample.column(f"E[V_t V_t+{lag:g}]")
        lin = estimate("lin", p - 2.0 * mbar * m)
        out.append(EnsembleEstimate(f"Cov(V_t, V_t+{lag:g})", lin.n_paths, float(p.mean() - mbar**2), lin.stderr))
    return out


def decay_slope(lags, cov) -> float:
    """Least-squares slope of ``log |cov|`` against the lag."""
    lags = np.asarray(lags, dtype=float)
    return float(np.polyfit(lags, np.log(np.abs(np.asarray(cov, dtype=float))), 1)[0])


def return_rows(spec, r: float, h: float, n_paths: int, seed: int, workers: int = 1, lags=(1, 2, 3, 4, 5)):
    """Return mean, second moment, disjoint-lag products and squared-return covariance.

    Mean and lag products are compared with 0 inside a simultaneous 95% band.
    The squared-return row is a paired test: per path
    ``R_0^2 R_h^2 - a . G_r^2 V_r e_J - b . G_r^2 e_J`` has mean 0 exactly when
    the covariance formula holds, so the inner expectations come from the
    same paths.
    """
    model = _model(spec)
    if isinstance(spec, MsbnsSpec) and not spec.is_martingale_price:
        raise ValueError("return validation needs mu = beta = rho = 0")
    fn = Functional("returns", r=r, h=h, lags=tuple(lags))
    sample = run_ensemble(spec, fn, n_paths, seed, workers)
    mom = model.logreturn_moments(spec, r)
    thr = band_threshold(1 + len(lags))
    rows = [("E_pi[G^(r)]", mom.mean, sample.estimate("E[R]"), thr)]
    for lag in lags:
        rows.append((f"E_pi[G^(r)_0 G^(r)_{lag}]", 0.0, sample.estimate(f"E[R_0 R_{lag}]"), thr))
    rows.append(("E_pi[(G^(r))^2]", mom.second_moment, sample.estimate("E[R^2]")))
    a, b, const = model.squared_return_coefficients(spec, r, h)
    n = spec.n_states
    x = np.column_stack([sample.column(f"E[G_r^2 V_r; J_r={j + 1}]") for j in range(n)])
    y = np.column_stack([sample.column(f"E[G_r^2; J_r={j + 1}]") for j in range(n)])
    prod = sample.column("E[R_0^2 R_h^2]")
    diff = prod - x @ a - y @ b
    d_est = estimate("paired", diff)
    analytic = float(a @ x.mean(axis=0) + b @ y.mean(axis=0) - const)
    mc = float(prod.mean() - const)
    rows.append((f"Cov_pi((G^(r))^2, (G^(r)_h)^2) r={r:g} h={h:g}", analytic,
                 EnsembleEstimate("cov_squared", d_est.n_paths, mc, d_est.stderr)))
    return rows, sample
